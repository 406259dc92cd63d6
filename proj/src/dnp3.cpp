#include "cpfusion/dnp3.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <optional>

#include <fmt/format.h>

namespace cpfusion::dnp3 {

namespace {

constexpr std::uint16_t kReflectedPoly = 0xA6BC;

constexpr std::array<std::uint16_t, 256> make_crc_table() {
  std::array<std::uint16_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint16_t crc = static_cast<std::uint16_t>(i);
    for (int bit = 0; bit < 8; ++bit) {
      crc = (crc & 1U) ? static_cast<std::uint16_t>((crc >> 1) ^ kReflectedPoly)
                       : static_cast<std::uint16_t>(crc >> 1);
    }
    table[i] = crc;
  }
  return table;
}

constexpr auto kCrcTable = make_crc_table();

void append_crc(std::vector<std::uint8_t>& out, std::span<const std::uint8_t> block) {
  const std::uint16_t crc = crc16_dnp(block);
  out.push_back(static_cast<std::uint8_t>(crc & 0xFF));
  out.push_back(static_cast<std::uint8_t>(crc >> 8));
}

bool crc_matches(std::span<const std::uint8_t> block, std::uint8_t lo, std::uint8_t hi) {
  const std::uint16_t crc = crc16_dnp(block);
  return lo == (crc & 0xFF) && hi == (crc >> 8);
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  put_u16(out, v & 0xFFFF);
  put_u16(out, v >> 16);
}

[[noreturn]] void malformed(const std::string& what) {
  throw Error(Errc::MalformedObjectHeader, what);
}

// Octets per point for a supported group/variation; 0 marks bit-packed
// (group 1 variation 1); nullopt marks an unsupported combination.
std::optional<std::size_t> element_size(std::uint8_t group, std::uint8_t variation) {
  switch (group) {
    case 1:
      if (variation == 1) return 0;
      if (variation == 2) return 1;
      break;
    case 12:
      if (variation == 1) return 11;
      break;
    case 20:
      if (variation == 1) return 5;
      if (variation == 5) return 4;
      break;
    case 30:
      if (variation == 1) return 5;
      if (variation == 2) return 3;
      if (variation == 3) return 4;
      if (variation == 4) return 2;
      break;
    case 41:
      if (variation == 1) return 5;
      if (variation == 2) return 3;
      break;
    default:
      break;
  }
  return std::nullopt;
}

bool header_only_variation_ok(std::uint8_t group, std::uint8_t variation) {
  if (group == 60) return variation >= 1 && variation <= 4;
  if (variation == 0) return group == 1 || group == 20 || group == 30;
  return element_size(group, variation).has_value();
}

bool is_indexed(std::uint8_t q) { return q == qualifier::kIndexed8 || q == qualifier::kIndexed16; }

std::size_t index_prefix_size(std::uint8_t q) { return q == qualifier::kIndexed8 ? 1 : 2; }

double to_signed(std::uint32_t raw, int bits) {
  if (bits == 16) return static_cast<double>(static_cast<std::int16_t>(raw & 0xFFFF));
  return static_cast<double>(static_cast<std::int32_t>(raw));
}

Point decode_element(std::uint8_t group, std::uint8_t variation, std::span<const std::uint8_t> e,
                     std::uint32_t index) {
  Point p;
  p.index = index;
  switch (group) {
    case 1:  // variation 2: flags with state in bit 7
      p.flags = e[0] & 0x7F;
      p.value = (e[0] & 0x80) ? 1.0 : 0.0;
      break;
    case 12:
      p.crob.code = e[0];
      p.crob.count = e[1];
      p.crob.on_ms = read_u32(e, 2);
      p.crob.off_ms = read_u32(e, 6);
      p.crob.status = e[10];
      p.flags = e[10];
      p.value = crob_state(p.crob);
      break;
    case 20:
      if (variation == 1) {
        p.flags = e[0];
        p.value = static_cast<double>(read_u32(e, 1));
      } else {
        p.value = static_cast<double>(read_u32(e, 0));
      }
      break;
    case 30:
      switch (variation) {
        case 1: p.flags = e[0]; p.value = to_signed(read_u32(e, 1), 32); break;
        case 2: p.flags = e[0]; p.value = to_signed(read_u16(e, 1), 16); break;
        case 3: p.value = to_signed(read_u32(e, 0), 32); break;
        default: p.value = to_signed(read_u16(e, 0), 16); break;
      }
      break;
    case 41:
      if (variation == 1) {
        p.value = to_signed(read_u32(e, 0), 32);
        p.flags = e[4];
      } else {
        p.value = to_signed(read_u16(e, 0), 16);
        p.flags = e[2];
      }
      break;
    default:
      malformed(fmt::format("unsupported group {}", group));
  }
  return p;
}

std::uint32_t integral_value(double v, int bits, bool is_signed) {
  if (!std::isfinite(v) || std::nearbyint(v) != v) {
    throw Error(Errc::InvalidArgument, fmt::format("point value {} is not integral", v));
  }
  const double lo = is_signed ? -std::ldexp(1.0, bits - 1) : 0.0;
  const double hi = is_signed ? std::ldexp(1.0, bits - 1) - 1 : std::ldexp(1.0, bits) - 1;
  if (v < lo || v > hi) {
    throw Error(Errc::InvalidArgument, fmt::format("point value {} out of {}-bit range", v, bits));
  }
  if (is_signed) {
    return static_cast<std::uint32_t>(static_cast<std::int64_t>(v) &
                                      (bits == 16 ? 0xFFFF : 0xFFFFFFFFLL));
  }
  return static_cast<std::uint32_t>(v);
}

void encode_element(std::vector<std::uint8_t>& out, std::uint8_t group, std::uint8_t variation,
                    const Point& p) {
  switch (group) {
    case 1:
      out.push_back(static_cast<std::uint8_t>((p.flags & 0x7F) | (p.value != 0.0 ? 0x80 : 0)));
      break;
    case 12:
      out.push_back(p.crob.code);
      out.push_back(p.crob.count);
      put_u32(out, p.crob.on_ms);
      put_u32(out, p.crob.off_ms);
      out.push_back(p.crob.status);
      break;
    case 20:
      if (variation == 1) out.push_back(p.flags);
      put_u32(out, integral_value(p.value, 32, false));
      break;
    case 30:
      if (variation == 1 || variation == 2) out.push_back(p.flags);
      if (variation == 1 || variation == 3) {
        put_u32(out, integral_value(p.value, 32, true));
      } else {
        put_u16(out, integral_value(p.value, 16, true));
      }
      break;
    case 41:
      if (variation == 1) {
        put_u32(out, integral_value(p.value, 32, true));
      } else {
        put_u16(out, integral_value(p.value, 16, true));
      }
      out.push_back(p.flags);
      break;
    default:
      throw Error(Errc::InvalidArgument, fmt::format("cannot encode group {}", group));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  bool done() const { return pos_ >= data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (remaining() < n) malformed(fmt::format("object data truncated reading {}", what));
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u8(const char* what) { return take(1, what)[0]; }
  std::uint32_t u16(const char* what) { return read_u16(take(2, what), 0); }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

ObjectBlock parse_object(Reader& in, bool with_data) {
  ObjectBlock block;
  block.group = static_cast<std::uint8_t>(in.u8("group"));
  block.variation = static_cast<std::uint8_t>(in.u8("variation"));
  block.qualifier = static_cast<std::uint8_t>(in.u8("qualifier"));

  const bool is_class = block.group == 60;
  if (is_class || !with_data) {
    if (!header_only_variation_ok(block.group, block.variation)) {
      malformed(fmt::format("unsupported object g{}v{}", block.group, block.variation));
    }
  } else if (!element_size(block.group, block.variation)) {
    malformed(fmt::format("unsupported object g{}v{}", block.group, block.variation));
  }
  if (is_class && (with_data || block.qualifier != qualifier::kAll)) {
    malformed("class objects must be header-only with qualifier 0x06");
  }

  switch (block.qualifier) {
    case qualifier::kRange8:
    case qualifier::kRange16: {
      const bool wide = block.qualifier == qualifier::kRange16;
      block.start = wide ? in.u16("start") : in.u8("start");
      block.stop = wide ? in.u16("stop") : in.u8("stop");
      if (block.stop < block.start) malformed("range stop precedes start");
      block.count = block.stop - block.start + 1;
      break;
    }
    case qualifier::kAll:
      if (with_data) malformed("qualifier 0x06 carries no point data");
      block.count = 0;
      break;
    case qualifier::kCount8:
    case qualifier::kIndexed8:
      block.count = in.u8("count");
      break;
    case qualifier::kCount16:
    case qualifier::kIndexed16:
      block.count = in.u16("count");
      break;
    default:
      malformed(fmt::format("unsupported qualifier 0x{:02x}", block.qualifier));
  }

  if (!with_data) {
    if (is_indexed(block.qualifier)) malformed("indexed qualifier in header-only object");
    return block;
  }

  const std::size_t size = *element_size(block.group, block.variation);
  const bool indexed = is_indexed(block.qualifier);
  if (size == 0) {
    if (indexed) malformed("packed variation cannot be index-prefixed");
    auto bits = in.take((block.count + 7) / 8, "packed bits");
    block.points.reserve(block.count);
    for (std::uint32_t i = 0; i < block.count; ++i) {
      Point p;
      p.index = block.start + i;
      p.value = ((bits[i / 8] >> (i % 8)) & 1U) ? 1.0 : 0.0;
      block.points.push_back(p);
    }
    return block;
  }
  block.points.reserve(block.count);
  for (std::uint32_t i = 0; i < block.count; ++i) {
    std::uint32_t index = block.start + i;
    if (indexed) {
      index = index_prefix_size(block.qualifier) == 1 ? in.u8("index") : in.u16("index");
    }
    block.points.push_back(decode_element(block.group, block.variation, in.take(size, "element"),
                                          index));
  }
  return block;
}

void serialize_object(std::vector<std::uint8_t>& out, const ObjectBlock& block, bool with_data) {
  out.push_back(block.group);
  out.push_back(block.variation);
  out.push_back(block.qualifier);
  switch (block.qualifier) {
    case qualifier::kRange8:
      out.push_back(static_cast<std::uint8_t>(block.start));
      out.push_back(static_cast<std::uint8_t>(block.stop));
      break;
    case qualifier::kRange16:
      put_u16(out, block.start);
      put_u16(out, block.stop);
      break;
    case qualifier::kAll:
      break;
    case qualifier::kCount8:
    case qualifier::kIndexed8:
      out.push_back(static_cast<std::uint8_t>(block.count));
      break;
    case qualifier::kCount16:
    case qualifier::kIndexed16:
      put_u16(out, block.count);
      break;
    default:
      throw Error(Errc::InvalidArgument, "unsupported qualifier");
  }
  if (!with_data || block.group == 60) return;
  if (block.points.size() != block.count) {
    throw Error(Errc::InvalidArgument, "point list does not match object count");
  }
  const auto size = element_size(block.group, block.variation);
  if (!size) throw Error(Errc::InvalidArgument, "unsupported variation");
  if (*size == 0) {
    std::vector<std::uint8_t> bits((block.count + 7) / 8, 0);
    for (std::uint32_t i = 0; i < block.count; ++i) {
      if (block.points[i].value != 0.0) bits[i / 8] |= static_cast<std::uint8_t>(1U << (i % 8));
    }
    out.insert(out.end(), bits.begin(), bits.end());
    return;
  }
  for (const auto& p : block.points) {
    if (block.qualifier == qualifier::kIndexed8) {
      out.push_back(static_cast<std::uint8_t>(p.index));
    } else if (block.qualifier == qualifier::kIndexed16) {
      put_u16(out, p.index);
    }
    encode_element(out, block.group, block.variation, p);
  }
}

}  // namespace

std::uint16_t crc16_dnp(std::span<const std::uint8_t> data) noexcept {
  std::uint16_t crc = 0;
  for (std::uint8_t byte : data) {
    crc = static_cast<std::uint16_t>((crc >> 8) ^ kCrcTable[(crc ^ byte) & 0xFF]);
  }
  return static_cast<std::uint16_t>(~crc);
}

LinkFrame make_link_frame(std::uint8_t ctrl, std::uint16_t dest, std::uint16_t src,
                          std::vector<std::uint8_t> user_data) {
  if (user_data.size() > kMaxUserData) {
    throw Error(Errc::InvalidArgument,
                fmt::format("link user data of {} octets exceeds {}", user_data.size(), kMaxUserData));
  }
  LinkFrame frame;
  frame.ll_len = static_cast<std::uint8_t>(5 + user_data.size());
  frame.ll_ctrl = ctrl;
  frame.ll_dest = dest;
  frame.ll_src = src;
  frame.user_data = std::move(user_data);
  return frame;
}

std::size_t link_wire_size(std::uint8_t ll_len) noexcept {
  const std::size_t user = ll_len >= 5 ? ll_len - 5U : 0U;
  const std::size_t blocks = (user + kBlockSize - 1) / kBlockSize;
  return kHeaderSize + user + 2 * blocks;
}

LinkFrame parse_link_frame(std::span<const std::uint8_t> wire) {
  if (wire.size() < kHeaderSize) {
    if (wire.size() >= 2 && (wire[0] != kStartOctet0 || wire[1] != kStartOctet1)) {
      throw Error(Errc::BadStartBytes, "frame does not begin with 0x05 0x64");
    }
    throw Error(Errc::Truncated, fmt::format("{} octets is shorter than a link header", wire.size()));
  }
  if (!crc_matches(wire.first(8), wire[8], wire[9])) {
    throw Error(Errc::CrcMismatch, "header CRC mismatch", kHeaderBlock);
  }
  if (wire[0] != kStartOctet0 || wire[1] != kStartOctet1) {
    throw Error(Errc::BadStartBytes, "frame does not begin with 0x05 0x64");
  }
  LinkFrame frame;
  frame.ll_len = wire[2];
  frame.ll_ctrl = wire[3];
  frame.ll_dest = read_u16(wire, 4);
  frame.ll_src = read_u16(wire, 6);
  if (frame.ll_len < 5) {
    throw Error(Errc::Truncated, fmt::format("LEN field {} below minimum 5", frame.ll_len));
  }
  const std::size_t total = link_wire_size(frame.ll_len);
  if (wire.size() < total) {
    throw Error(Errc::Truncated, fmt::format("frame needs {} octets, have {}", total, wire.size()));
  }
  std::size_t user_left = frame.ll_len - 5U;
  frame.user_data.reserve(user_left);
  std::size_t pos = kHeaderSize;
  for (int block = 0; user_left > 0; ++block) {
    const std::size_t n = std::min(user_left, kBlockSize);
    auto data = wire.subspan(pos, n);
    if (!crc_matches(data, wire[pos + n], wire[pos + n + 1])) {
      throw Error(Errc::CrcMismatch, fmt::format("data block {} CRC mismatch", block), block);
    }
    frame.user_data.insert(frame.user_data.end(), data.begin(), data.end());
    pos += n + 2;
    user_left -= n;
  }
  return frame;
}

std::vector<std::uint8_t> serialize_link_frame(const LinkFrame& frame) {
  if (frame.user_data.size() > kMaxUserData || frame.ll_len != 5 + frame.user_data.size()) {
    throw Error(Errc::InvalidArgument, "LEN field inconsistent with user data");
  }
  std::vector<std::uint8_t> out;
  out.reserve(link_wire_size(frame.ll_len));
  out.push_back(kStartOctet0);
  out.push_back(kStartOctet1);
  out.push_back(frame.ll_len);
  out.push_back(frame.ll_ctrl);
  put_u16(out, frame.ll_dest);
  put_u16(out, frame.ll_src);
  append_crc(out, std::span(out).first(8));
  for (std::size_t pos = 0; pos < frame.user_data.size(); pos += kBlockSize) {
    const std::size_t n = std::min(kBlockSize, frame.user_data.size() - pos);
    auto block = std::span(frame.user_data).subspan(pos, n);
    out.insert(out.end(), block.begin(), block.end());
    append_crc(out, block);
  }
  return out;
}

TransportHeader parse_transport(std::uint8_t octet) noexcept {
  return TransportHeader{(octet & 0x80) != 0, (octet & 0x40) != 0,
                         static_cast<std::uint8_t>(octet & 0x3F)};
}

std::uint8_t serialize_transport(const TransportHeader& header) noexcept {
  return static_cast<std::uint8_t>((header.fin ? 0x80 : 0) | (header.fir ? 0x40 : 0) |
                                   (header.seq & 0x3F));
}

bool is_known_function_code(int code) noexcept {
  return code == fc::kRead || code == fc::kDirectOperate || code == fc::kEnableUnsolicited ||
         code == fc::kDisableUnsolicited || code == fc::kResponse;
}

std::string_view point_kind_tag(PointKind kind) noexcept {
  switch (kind) {
    case PointKind::BinaryInput: return "BI";
    case PointKind::BinaryOutput: return "BO";
    case PointKind::AnalogInput: return "AI";
    case PointKind::AnalogOutput: return "AO";
    case PointKind::Counter: return "CI";
    case PointKind::Class: return "CL";
  }
  return "??";
}

double crob_state(const Crob& crob) noexcept {
  const std::uint8_t tcc = crob.code & 0xC0;
  if (tcc == 0x40) return 1.0;
  if (tcc == 0x80) return 0.0;
  const std::uint8_t op = crob.code & 0x0F;
  return (op == 1 || op == 3) ? 1.0 : 0.0;
}

PointKind ObjectBlock::kind() const {
  switch (group) {
    case 1: return PointKind::BinaryInput;
    case 10:
    case 12: return PointKind::BinaryOutput;
    case 20: return PointKind::Counter;
    case 30: return PointKind::AnalogInput;
    case 40:
    case 41: return PointKind::AnalogOutput;
    case 60: return PointKind::Class;
    default: throw Error(Errc::MalformedObjectHeader, fmt::format("unknown group {}", group));
  }
}

bool carries_point_data(Direction direction, int function_code) noexcept {
  if (direction == Direction::Response) return true;
  return !(function_code == fc::kRead || function_code == fc::kEnableUnsolicited ||
           function_code == fc::kDisableUnsolicited);
}

AppFragment parse_application(std::span<const std::uint8_t> fragment, Direction direction) {
  const std::size_t fixed = direction == Direction::Response ? 4 : 2;
  if (fragment.size() < fixed) {
    throw Error(Errc::Truncated,
                fmt::format("application fragment of {} octets lacks its header", fragment.size()));
  }
  AppFragment app;
  app.direction = direction;
  app.al_ctrl = fragment[0];
  app.function_code = fragment[1];
  if (!is_known_function_code(app.function_code)) {
    throw Error(Errc::UnknownFunctionCode,
                fmt::format("function code {} is not handled", app.function_code),
                app.function_code);
  }
  if (direction == Direction::Response) app.iin = read_u16(fragment, 2);
  const bool with_data = carries_point_data(direction, app.function_code);
  Reader in(fragment.subspan(fixed));
  while (!in.done()) {
    app.objects.push_back(parse_object(in, with_data));
    app.obj_count += app.objects.back().count;
  }
  return app;
}

std::vector<std::uint8_t> serialize_application(const AppFragment& fragment) {
  std::vector<std::uint8_t> out;
  out.push_back(fragment.al_ctrl);
  out.push_back(static_cast<std::uint8_t>(fragment.function_code));
  if (fragment.direction == Direction::Response) put_u16(out, fragment.iin);
  const bool with_data = carries_point_data(fragment.direction, fragment.function_code);
  for (const auto& block : fragment.objects) serialize_object(out, block, with_data);
  return out;
}

ObjectBlock make_range_block(std::uint8_t group, std::uint8_t variation, std::uint32_t start,
                             std::vector<Point> points) {
  if (points.empty()) throw Error(Errc::InvalidArgument, "range block needs at least one point");
  ObjectBlock block;
  block.group = group;
  block.variation = variation;
  block.count = static_cast<std::uint32_t>(points.size());
  block.start = start;
  block.stop = start + block.count - 1;
  block.qualifier = block.stop > 0xFF ? qualifier::kRange16 : qualifier::kRange8;
  for (std::uint32_t i = 0; i < points.size(); ++i) points[i].index = start + i;
  block.points = std::move(points);
  return block;
}

ObjectBlock make_read_block(std::uint8_t group, std::uint8_t variation, std::uint32_t start,
                            std::uint32_t stop) {
  ObjectBlock block;
  block.group = group;
  block.variation = variation;
  block.start = start;
  block.stop = stop;
  block.count = stop - start + 1;
  block.qualifier = stop > 0xFF ? qualifier::kRange16 : qualifier::kRange8;
  return block;
}

ObjectBlock make_indexed_block(std::uint8_t group, std::uint8_t variation, std::vector<Point> points) {
  ObjectBlock block;
  block.group = group;
  block.variation = variation;
  block.qualifier = qualifier::kIndexed8;
  block.count = static_cast<std::uint32_t>(points.size());
  for (const auto& p : points) {
    if (p.index > 0xFF) block.qualifier = qualifier::kIndexed16;
  }
  block.points = std::move(points);
  return block;
}

ObjectBlock make_class_block(std::uint8_t variation) {
  ObjectBlock block;
  block.group = 60;
  block.variation = variation;
  block.qualifier = qualifier::kAll;
  return block;
}

PhysicalRecord extract_physical(const LinkFrame& frame) {
  if (frame.user_data.empty()) {
    throw Error(Errc::Truncated, "link frame carries no transport segment");
  }
  PhysicalRecord rec;
  rec.ll_src = frame.ll_src;
  rec.ll_dest = frame.ll_dest;
  rec.ll_len = frame.ll_len;
  rec.ll_ctrl = frame.ll_ctrl;
  rec.tl_ctrl = frame.user_data[0];
  const auto direction = frame.from_master() ? Direction::Request : Direction::Response;
  const auto app = parse_application(std::span(frame.user_data).subspan(1), direction);
  rec.al_ctrl = app.al_ctrl;
  rec.function_code = app.function_code;
  rec.obj_count = app.obj_count;
  for (const auto& block : app.objects) {
    const PointKind kind = block.kind();
    auto& values = rec.al_payload[kind];
    for (const auto& p : block.points) values.push_back(p.value);
    rec.point_counts[kind] += block.count;
  }
  return rec;
}

std::vector<std::uint8_t> encode_frame(std::uint8_t ll_ctrl, std::uint16_t dest, std::uint16_t src,
                                       const TransportHeader& transport,
                                       const AppFragment& fragment) {
  std::vector<std::uint8_t> user;
  user.push_back(serialize_transport(transport));
  const auto app = serialize_application(fragment);
  user.insert(user.end(), app.begin(), app.end());
  return serialize_link_frame(make_link_frame(ll_ctrl, dest, src, std::move(user)));
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0F]);
  }
  return out;
}

std::vector<std::uint8_t> from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw Error(Errc::ParseError, "odd-length hex string");
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int hi = nibble(hex[2 * i]);
    const int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(Errc::ParseError, "invalid hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

}  // namespace cpfusion::dnp3
