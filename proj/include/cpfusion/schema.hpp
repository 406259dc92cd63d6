#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "cpfusion/common.hpp"

namespace cpfusion {

/// The 28 fused feature columns, in table order: 19 cyber/security columns
/// followed by 9 DNP3-derived physical columns.
enum class Column : std::size_t {
  FrameLen,
  FrameProt,
  EthSrc,
  EthDst,
  IpSrc,
  IpDst,
  IpLen,
  IpFlags,
  SrcPort,
  DestPort,
  TcpLen,
  TcpFlags,
  Retrans,
  Rtt,
  FlowCnt,
  FlowFinCnt,
  Packets,
  SnortAlert,
  AlertType,
  LlSrc,
  LlDest,
  LlLen,
  LlCtrl,
  TlCtrl,
  FuncCode,
  AlCtrl,
  ObjCount,
  AlPayload,
};

inline constexpr std::size_t kNumColumns = 28;
inline constexpr std::size_t kNumCyberColumns = 19;
inline constexpr std::size_t kNumPhysicalColumns = 9;
/// Columns copied straight from a captured packet.
inline constexpr std::size_t kNumPacketColumns = 12;

enum class ColumnKind { Numeric, Categorical };

struct ColumnSpec {
  std::string_view name;
  ColumnKind kind;
  /// Default used by imputation; numeric columns parse it as a number.
  std::string_view default_value;
};

const ColumnSpec& column_spec(Column column) noexcept;
const ColumnSpec& column_spec(std::size_t index) noexcept;
std::optional<Column> column_by_name(std::string_view name) noexcept;

constexpr std::size_t index_of(Column column) noexcept { return static_cast<std::size_t>(column); }

/// Sentinel literal for absent categorical values.
inline constexpr std::string_view kNanSentinel = "Nan";

using CellValue = std::variant<double, std::string>;
/// An empty cell is "absent": not observed by any sensor yet.
using Cell = std::optional<CellValue>;

/// Default value of a column as a cell.
CellValue column_default(Column column);

/// Formats an 8-bit flag field the way categorical flag columns store it ("0x40").
std::string format_flags(unsigned value);

/// Shortest round-trip decimal text for a double.
std::string format_number(double value);

template <std::size_t N>
struct Row {
  TimestampUs ts_us = 0;
  std::array<Cell, N> cells{};

  Cell& operator[](Column c) { return cells[index_of(c)]; }
  const Cell& operator[](Column c) const { return cells[index_of(c)]; }
  bool operator==(const Row&) const = default;
};

}  // namespace cpfusion
