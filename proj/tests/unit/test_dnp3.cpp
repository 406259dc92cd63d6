#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <vector>

#include "cpfusion/dnp3.hpp"
#include "cpfusion/rng.hpp"

using namespace cpfusion;
using namespace cpfusion::dnp3;

namespace {

// Table-free reference: shift register over the reflected polynomial, one bit at a time.
std::uint16_t crc_bitwise(const std::vector<std::uint8_t>& data) {
  std::uint16_t crc = 0;
  for (std::uint8_t byte : data) {
    for (int bit = 0; bit < 8; ++bit) {
      const bool mix = ((crc ^ (byte >> bit)) & 1U) != 0;
      crc >>= 1;
      if (mix) crc ^= 0xA6BC;
    }
  }
  return static_cast<std::uint16_t>(~crc);
}

Errc error_code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::InvalidArgument;
}

AppFragment response_fragment() {
  AppFragment app;
  app.function_code = fc::kResponse;
  app.direction = Direction::Response;
  app.iin = 0x0000;
  std::vector<Point> bi(3), ai(4);
  for (std::size_t i = 0; i < bi.size(); ++i) bi[i].value = static_cast<double>(i % 2), bi[i].flags = 0x01;
  for (std::size_t i = 0; i < ai.size(); ++i) ai[i].value = 1000.0 + 17.0 * static_cast<double>(i), ai[i].flags = 0x01;
  app.objects.push_back(make_range_block(1, 2, 0, bi));
  app.objects.push_back(make_range_block(30, 1, 0, ai));
  app.obj_count = 7;
  return app;
}

}  // namespace

TEST_CASE("crc of the empty input is the complemented zero register") {
  CHECK(crc16_dnp({}) == 0xFFFF);
  CHECK(crc_bitwise({}) == 0xFFFF);
}

TEST_CASE("crc of a link header matches the bitwise reference") {
  const std::vector<std::uint8_t> header{0x05, 0x64, 0x05, 0xC0, 0x01, 0x00, 0x00, 0x04};
  CHECK(crc16_dnp(header) == crc_bitwise(header));
  // Transmitted low octet first: E9 21.
  CHECK(crc16_dnp(header) == 0x21E9);
}

TEST_CASE("crc agrees with the reference on random blocks and detects every single-bit flip") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> block(1 + rng.below(16));
    for (auto& b : block) b = static_cast<std::uint8_t>(rng.below(256));
    const auto crc = crc16_dnp(block);
    REQUIRE(crc == crc_bitwise(block));
    for (std::size_t bit = 0; bit < block.size() * 8; ++bit) {
      auto flipped = block;
      flipped[bit / 8] ^= static_cast<std::uint8_t>(1U << (bit % 8));
      CHECK(crc16_dnp(flipped) != crc);
    }
  }
}

TEST_CASE("transport octet bits") {
  auto h = parse_transport(0xC0);
  CHECK(h.fin);
  CHECK(h.fir);
  CHECK(h.seq == 0);
  h = parse_transport(0x41);
  CHECK_FALSE(h.fin);
  CHECK(h.fir);
  CHECK(h.seq == 1);
  CHECK(parse_transport(0x3F).seq == 63);
  for (int v = 0; v < 256; ++v) CHECK(serialize_transport(parse_transport(static_cast<std::uint8_t>(v))) == v);
}

TEST_CASE("link frame round trip across sizes") {
  for (std::size_t n : {0U, 1U, 15U, 16U, 17U, 32U, 100U, 250U}) {
    std::vector<std::uint8_t> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<std::uint8_t>(i * 7 + 3);
    const auto frame = make_link_frame(0xC4, 10, 100, data);
    CHECK(frame.ll_len == 5 + n);
    const auto wire = serialize_link_frame(frame);
    CHECK(wire.size() == link_wire_size(frame.ll_len));
    CHECK(parse_link_frame(wire) == frame);
  }
}

TEST_CASE("link frame errors") {
  const auto frame = make_link_frame(0x44, 100, 3, std::vector<std::uint8_t>(40, 0xAB));
  const auto wire = serialize_link_frame(frame);

  SUBCASE("corrupted second data block") {
    auto bad = wire;
    bad[kHeaderSize + 18 + 16] ^= 0x01;  // CRC of block 1
    try {
      parse_link_frame(bad);
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::CrcMismatch);
      CHECK(e.detail() == 1);
    }
  }
  SUBCASE("header corruption reports the header block") {
    auto bad = wire;
    bad[5] ^= 0x80;
    try {
      parse_link_frame(bad);
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::CrcMismatch);
      CHECK(e.detail() == kHeaderBlock);
    }
  }
  SUBCASE("wrong start octets with a valid header crc") {
    std::vector<std::uint8_t> bad(wire.begin(), wire.begin() + 8);
    bad[0] = 0x06;
    const auto crc = crc16_dnp(bad);
    bad.push_back(static_cast<std::uint8_t>(crc & 0xFF));
    bad.push_back(static_cast<std::uint8_t>(crc >> 8));
    bad.insert(bad.end(), wire.begin() + 10, wire.end());
    CHECK(error_code_of([&] { parse_link_frame(bad); }) == Errc::BadStartBytes);
  }
  SUBCASE("truncation") {
    std::vector<std::uint8_t> cut(wire.begin(), wire.end() - 3);
    CHECK(error_code_of([&] { parse_link_frame(cut); }) == Errc::Truncated);
    std::vector<std::uint8_t> tiny(wire.begin(), wire.begin() + 4);
    CHECK(error_code_of([&] { parse_link_frame(tiny); }) == Errc::Truncated);
  }
  SUBCASE("every single-bit flip is rejected") {
    for (std::size_t bit = 0; bit < wire.size() * 8; ++bit) {
      auto bad = wire;
      bad[bit / 8] ^= static_cast<std::uint8_t>(1U << (bit % 8));
      CHECK(error_code_of([&] { parse_link_frame(bad); }) == Errc::CrcMismatch);
    }
  }
}

TEST_CASE("read request with a class-0 object") {
  AppFragment app;
  app.al_ctrl = 0xC0;
  app.function_code = fc::kRead;
  app.objects.push_back(make_class_block(1));
  const auto bytes = serialize_application(app);
  CHECK(bytes[0] == 0xC0);
  CHECK(bytes[1] == 0x01);
  const auto parsed = parse_application(bytes, Direction::Request);
  CHECK(parsed.function_code == 1);
  CHECK(parsed.direction == Direction::Request);
  CHECK(parsed.objects.size() == 1);
}

TEST_CASE("response function code 0x81 and obj_count additivity") {
  AppFragment app;
  app.function_code = fc::kResponse;
  app.direction = Direction::Response;
  std::vector<Point> four(4), six(6);
  for (std::size_t i = 0; i < four.size(); ++i) four[i].value = static_cast<double>(i);
  for (std::size_t i = 0; i < six.size(); ++i) six[i].value = -static_cast<double>(i) * 3;
  app.objects.push_back(make_range_block(30, 2, 0, four));
  app.objects.push_back(make_range_block(30, 1, 10, six));
  app.obj_count = 10;
  const auto bytes = serialize_application(app);
  CHECK(bytes[1] == 0x81);
  const auto parsed = parse_application(bytes, Direction::Response);
  CHECK(parsed.function_code == 129);
  CHECK(parsed.obj_count == 10);
  CHECK(parsed == app);
}

TEST_CASE("unknown function code carries its raw value") {
  std::vector<std::uint8_t> bytes{0xC0, 0x02};
  try {
    parse_application(bytes, Direction::Request);
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnknownFunctionCode);
    CHECK(e.detail() == 2);
  }
}

TEST_CASE("unsupported variation is a malformed header") {
  // g30v5 (float) is not in the supported catalog.
  std::vector<std::uint8_t> bytes{0xC0, 0x81, 0x00, 0x00, 30, 5, 0x00, 0, 0, 0, 0, 0, 0, 0};
  CHECK(error_code_of([&] { parse_application(bytes, Direction::Response); }) ==
        Errc::MalformedObjectHeader);
}

TEST_CASE("response round trip through all layers and physical extraction") {
  const auto app = response_fragment();
  const auto wire = encode_frame(0x44, 100, 3, {true, true, 5}, app);
  const auto frame = parse_link_frame(wire);
  CHECK(frame.ll_src == 3);
  CHECK(frame.ll_dest == 100);
  CHECK(serialize_link_frame(frame) == wire);

  const auto rec = extract_physical(frame);
  CHECK(rec.ll_src == 3);
  CHECK(rec.ll_dest == 100);
  CHECK(rec.ll_len == frame.ll_len);
  CHECK(rec.ll_ctrl == 0x44);
  CHECK(rec.tl_ctrl == 0xC5);
  CHECK(rec.function_code == 129);
  CHECK(rec.obj_count == 7);
  CHECK(rec.al_payload.at(PointKind::BinaryInput) == std::vector<double>{0, 1, 0});
  CHECK(rec.al_payload.at(PointKind::AnalogInput).size() == 4);
}

TEST_CASE("read poll counts requested points") {
  AppFragment app;
  app.function_code = fc::kRead;
  app.objects.push_back(make_read_block(1, 2, 0, 7));
  app.objects.push_back(make_read_block(30, 1, 0, 3));
  app.obj_count = 12;
  const auto frame = parse_link_frame(encode_frame(0xC4, 3, 100, {}, app));
  const auto rec = extract_physical(frame);
  CHECK(rec.function_code == 1);
  CHECK(rec.obj_count == 12);
}

TEST_CASE("direct operate on one binary point") {
  AppFragment app;
  app.function_code = fc::kDirectOperate;
  Point p;
  p.index = 4;
  p.crob = Crob{0x41, 1, 100, 0, 0};
  p.value = crob_state(p.crob);
  app.objects.push_back(make_indexed_block(12, 1, {p}));
  app.obj_count = 1;
  const auto rec = extract_physical(parse_link_frame(encode_frame(0xC4, 3, 100, {}, app)));
  CHECK(rec.function_code == 5);
  CHECK(rec.obj_count == 1);
  CHECK(rec.al_payload.at(PointKind::BinaryOutput).size() == 1);
  CHECK(rec.al_payload.at(PointKind::BinaryOutput)[0] == 1.0);
}

TEST_CASE("obj_count equals the sum over decoded headers") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    AppFragment app;
    app.function_code = fc::kResponse;
    app.direction = Direction::Response;
    std::uint32_t total = 0;
    const int blocks = 1 + static_cast<int>(rng.below(4));
    for (int b = 0; b < blocks; ++b) {
      std::vector<Point> pts(1 + rng.below(8));
      for (auto& p : pts) p.value = static_cast<double>(rng.below(30000));
      total += static_cast<std::uint32_t>(pts.size());
      app.objects.push_back(make_range_block(30, rng.bernoulli(0.5) ? 1 : 2, 0, pts));
    }
    app.obj_count = total;
    const auto parsed = parse_application(serialize_application(app), Direction::Response);
    std::uint32_t brute = 0;
    for (const auto& block : parsed.objects) brute += block.count;
    CHECK(parsed.obj_count == brute);
    CHECK(parsed.obj_count == total);
  }
}

TEST_CASE("hex codec") {
  const std::vector<std::uint8_t> bytes{0x05, 0x64, 0xff, 0x00};
  CHECK(to_hex(bytes) == "0564ff00");
  CHECK(from_hex("0564FF00") == bytes);
  CHECK(error_code_of([] { from_hex("abc"); }) == Errc::ParseError);
}
