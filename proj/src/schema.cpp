#include "cpfusion/schema.hpp"

#include <charconv>
#include <cstdlib>

#include <fmt/format.h>

namespace cpfusion {

namespace {

using K = ColumnKind;

constexpr std::array<ColumnSpec, kNumColumns> kColumns{{
    {"Frame Len", K::Numeric, "0"},
    {"Frame Prot.", K::Categorical, "Nan"},
    {"Eth Src", K::Categorical, "0"},
    {"Eth Dst", K::Categorical, "0"},
    {"IP Src", K::Categorical, "0"},
    {"IP Dst", K::Categorical, "0"},
    {"IP Len", K::Numeric, "0"},
    {"IP Flags", K::Categorical, "0x00"},
    {"Src Port", K::Numeric, "0"},
    {"Dest Port", K::Numeric, "0"},
    {"TCP Len", K::Numeric, "0"},
    {"TCP Flags", K::Categorical, "0x00"},
    {"Retrans.", K::Numeric, "0"},
    {"RTT", K::Numeric, "-1"},
    {"Flow Cnt", K::Numeric, "-1"},
    {"Flow Fin Cnt", K::Numeric, "-1"},
    {"Packets", K::Numeric, "-1"},
    {"Snort Alert", K::Numeric, "0"},
    {"Alert Type", K::Categorical, "Nan"},
    {"LL Src", K::Numeric, "-1"},
    {"LL Dest", K::Numeric, "-1"},
    {"LL Len", K::Numeric, "0"},
    {"LL Ctrl", K::Categorical, "0x00"},
    {"TL Ctrl", K::Categorical, "0x00"},
    {"Func. code", K::Numeric, "-1"},
    {"AL Ctrl", K::Categorical, "0x00"},
    {"Obj count", K::Numeric, "0"},
    {"AL Payload", K::Categorical, "Nan"},
}};

}  // namespace

const ColumnSpec& column_spec(Column column) noexcept { return kColumns[index_of(column)]; }

const ColumnSpec& column_spec(std::size_t index) noexcept { return kColumns[index]; }

std::optional<Column> column_by_name(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kNumColumns; ++i) {
    if (kColumns[i].name == name) return static_cast<Column>(i);
  }
  return std::nullopt;
}

CellValue column_default(Column column) {
  const auto& spec = column_spec(column);
  if (spec.kind == ColumnKind::Numeric) {
    return std::strtod(std::string(spec.default_value).c_str(), nullptr);
  }
  return std::string(spec.default_value);
}

std::string format_flags(unsigned value) { return fmt::format("0x{:02x}", value & 0xFFU); }

std::string format_number(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

}  // namespace cpfusion
