#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cpfusion/common.hpp"

// DNP3 (IEEE 1815) link, transport and application layer codec, restricted
// to the object variations the scenario generator emits.
namespace cpfusion::dnp3 {

inline constexpr std::uint8_t kStartOctet0 = 0x05;
inline constexpr std::uint8_t kStartOctet1 = 0x64;
inline constexpr std::size_t kHeaderSize = 10;  // 8 header octets + CRC
inline constexpr std::size_t kBlockSize = 16;
inline constexpr std::size_t kMaxUserData = 250;
/// Block index reported by CrcMismatch when the header CRC fails.
inline constexpr int kHeaderBlock = -1;

/// DNP3 CRC-16: polynomial 0x3D65 processed LSB-first, result complemented.
std::uint16_t crc16_dnp(std::span<const std::uint8_t> data) noexcept;

// ---------------------------------------------------------------- link layer

struct LinkFrame {
  std::uint8_t ll_len = 5;  // octets after LEN, excluding CRCs
  std::uint8_t ll_ctrl = 0;
  std::uint16_t ll_dest = 0;
  std::uint16_t ll_src = 0;
  std::vector<std::uint8_t> user_data;  // CRC-stripped

  /// DIR bit: set on frames sent by a master.
  bool from_master() const noexcept { return (ll_ctrl & 0x80) != 0; }

  bool operator==(const LinkFrame&) const = default;
};

/// Builds a frame with ll_len derived from the user data size.
LinkFrame make_link_frame(std::uint8_t ctrl, std::uint16_t dest, std::uint16_t src,
                          std::vector<std::uint8_t> user_data);

/// Wire size of a frame whose LEN field holds `ll_len`.
std::size_t link_wire_size(std::uint8_t ll_len) noexcept;

/// Parses the frame at the start of `wire`; trailing octets are ignored.
/// The header CRC is verified before the start octets, so any single-bit
/// corruption of a frame surfaces as CrcMismatch.
/// Throws Error{BadStartBytes | CrcMismatch(block) | Truncated}.
LinkFrame parse_link_frame(std::span<const std::uint8_t> wire);

std::vector<std::uint8_t> serialize_link_frame(const LinkFrame& frame);

// ----------------------------------------------------------- transport layer

struct TransportHeader {
  bool fin = true;
  bool fir = true;
  std::uint8_t seq = 0;  // [0, 63]

  bool operator==(const TransportHeader&) const = default;
};

TransportHeader parse_transport(std::uint8_t octet) noexcept;
std::uint8_t serialize_transport(const TransportHeader& header) noexcept;

// --------------------------------------------------------- application layer

enum class Direction { Request, Response };

namespace fc {
inline constexpr int kRead = 1;
inline constexpr int kDirectOperate = 5;
inline constexpr int kEnableUnsolicited = 20;
inline constexpr int kDisableUnsolicited = 21;
inline constexpr int kResponse = 129;
}  // namespace fc

bool is_known_function_code(int code) noexcept;

enum class PointKind { BinaryInput, BinaryOutput, AnalogInput, AnalogOutput, Counter, Class };

std::string_view point_kind_tag(PointKind kind) noexcept;

namespace qualifier {
inline constexpr std::uint8_t kRange8 = 0x00;
inline constexpr std::uint8_t kRange16 = 0x01;
inline constexpr std::uint8_t kAll = 0x06;
inline constexpr std::uint8_t kCount8 = 0x07;
inline constexpr std::uint8_t kCount16 = 0x08;
inline constexpr std::uint8_t kIndexed8 = 0x17;
inline constexpr std::uint8_t kIndexed16 = 0x28;
}  // namespace qualifier

/// Control relay output block (group 12 variation 1).
struct Crob {
  std::uint8_t code = 0x03;  // LATCH_ON
  std::uint8_t count = 1;
  std::uint32_t on_ms = 0;
  std::uint32_t off_ms = 0;
  std::uint8_t status = 0;

  bool operator==(const Crob&) const = default;
};

/// 1 when the command drives the output on (pulse/latch on, close), else 0.
double crob_state(const Crob& crob) noexcept;

struct Point {
  std::uint32_t index = 0;
  double value = 0.0;      // binary state (0/1) or integral analog reading
  std::uint8_t flags = 0;  // quality flags, or command status for outputs
  Crob crob{};             // group 12 only

  bool operator==(const Point&) const = default;
};

struct ObjectBlock {
  std::uint8_t group = 0;
  std::uint8_t variation = 0;
  std::uint8_t qualifier = qualifier::kRange8;
  std::uint32_t start = 0;  // range qualifiers only
  std::uint32_t stop = 0;
  std::uint32_t count = 0;   // points described by the header
  std::vector<Point> points; // empty for header-only objects

  PointKind kind() const;
  bool operator==(const ObjectBlock&) const = default;
};

struct AppFragment {
  std::uint8_t al_ctrl = 0xC0;  // FIR | FIN | seq 0
  int function_code = fc::kRead;
  Direction direction = Direction::Request;
  std::uint16_t iin = 0;  // internal indications, responses only
  std::vector<ObjectBlock> objects;
  std::uint32_t obj_count = 0;  // sum of block counts

  bool operator==(const AppFragment&) const = default;
};

/// Whether objects of this fragment carry point data or only headers.
bool carries_point_data(Direction direction, int function_code) noexcept;

/// Throws Error{UnknownFunctionCode(raw) | MalformedObjectHeader | Truncated}.
AppFragment parse_application(std::span<const std::uint8_t> fragment, Direction direction);

std::vector<std::uint8_t> serialize_application(const AppFragment& fragment);

/// Range-qualified block helper; sets start/stop/count from the points.
ObjectBlock make_range_block(std::uint8_t group, std::uint8_t variation, std::uint32_t start,
                             std::vector<Point> points);
/// Header-only range block for read requests.
ObjectBlock make_read_block(std::uint8_t group, std::uint8_t variation, std::uint32_t start,
                            std::uint32_t stop);
/// Index-prefixed block (qualifier 0x17) for commands.
ObjectBlock make_indexed_block(std::uint8_t group, std::uint8_t variation, std::vector<Point> points);
/// Class-data header (group 60, qualifier 0x06).
ObjectBlock make_class_block(std::uint8_t variation);

// ------------------------------------------------------------ physical layer

/// The nine DNP3-derived feature columns.
struct PhysicalRecord {
  std::uint16_t ll_src = 0;
  std::uint16_t ll_dest = 0;
  std::uint8_t ll_len = 0;
  std::uint8_t ll_ctrl = 0;
  std::uint8_t tl_ctrl = 0;
  std::uint8_t al_ctrl = 0;
  int function_code = -1;
  std::uint32_t obj_count = 0;
  /// Point values grouped by kind, in object order. Header-only objects
  /// contribute an empty vector so the requested groups stay visible.
  std::map<PointKind, std::vector<double>> al_payload;
  /// Point counts per kind (for header-only objects, the requested count).
  std::map<PointKind, std::uint32_t> point_counts;

  bool operator==(const PhysicalRecord&) const = default;
};

/// Decodes transport and application layers of a single-segment frame.
PhysicalRecord extract_physical(const LinkFrame& frame);

/// Assembles link + transport + application into wire octets.
std::vector<std::uint8_t> encode_frame(std::uint8_t ll_ctrl, std::uint16_t dest, std::uint16_t src,
                                       const TransportHeader& transport,
                                       const AppFragment& fragment);

std::string to_hex(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> from_hex(std::string_view hex);

}  // namespace cpfusion::dnp3
