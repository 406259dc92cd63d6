#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpfusion/common.hpp"
#include "cpfusion/dnp3.hpp"
#include "cpfusion/ingest.hpp"
#include "cpfusion/scenario.hpp"
#include "cpfusion/schema.hpp"

// The merge engine: cyber table construction, flow/alert folding,
// physical join, imputation, encoding, scaling and labeling.
namespace cpfusion::fusion {

using ingest::CyberRecord;
using FusedRecord = Row<kNumColumns>;

// ------------------------------------------------------------ cyber merges

/// Retrans. and RTT columns from the per-packet annotations; `cb` and the
/// annotation vectors are index-aligned.
void apply_packet_annotations(std::vector<CyberRecord>& cb, const std::vector<std::uint8_t>& retrans,
                              const std::vector<std::optional<double>>& rtt_ms);

/// Record i (interval [t_i, t_{i+1}], last one open-ended) collects every
/// flow event satisfying one of the three start/end/span conditions.
/// Throws Error{UnsortedInput}.
std::vector<CyberRecord> merge_flow_features(std::vector<CyberRecord> cb,
                                             const std::vector<ingest::FlowEvent>& flows);

/// Alert at tau attaches to the last record with t_i <= tau; alerts before
/// the first record are dropped. Throws Error{UnsortedInput}.
std::vector<CyberRecord> merge_alerts(std::vector<CyberRecord> cb, const std::vector<ingest::AlertEvent>& alerts);

// --------------------------------------------------------- physical fusion

using PhysicalCells = std::array<Cell, kNumPhysicalColumns>;

/// Categorical summary of the point payload: per kind "TAG:count:mean" with
/// the rounded mean zero-padded to 8 digits, "TAG:count" for header-only
/// objects, joined by '|'.
std::string payload_signature(const dnp3::PhysicalRecord& rec);

PhysicalCells physical_cells(const dnp3::PhysicalRecord& rec);

struct PhysicalEntry {
  TimestampUs ts_us = 0;
  /// Index of the originating capture row when known; otherwise the join
  /// falls back to timestamp order.
  std::optional<std::size_t> row;
  PhysicalCells cells{};
};

/// Decodes every DNP3-bearing packet. Frames whose application layer is
/// not decodable keep their link/transport columns (the rest is imputed).
std::vector<PhysicalEntry> extract_physical_entries(const std::vector<ingest::RawPacket>& pkts);

enum class PhysicalMode { Impute, Drop };
std::string_view physical_mode_name(PhysicalMode mode) noexcept;
std::optional<PhysicalMode> parse_physical_mode(std::string_view name) noexcept;

/// Joins the physical columns onto the cyber rows. Drop removes rows without
/// a physical entry; Impute keeps them with physical columns absent.
std::vector<FusedRecord> fuse_physical(const std::vector<CyberRecord>& cb, const std::vector<PhysicalEntry>& phys,
                                       PhysicalMode mode);

/// Cyber base, packet annotations, alerts, flows, then the physical join,
/// over already loaded sources.
std::vector<FusedRecord> fuse_sources(const std::vector<ingest::RawPacket>& pkts,
                                      const std::vector<ingest::FlowEvent>& flows,
                                      const std::vector<ingest::AlertEvent>& alerts, PhysicalMode mode);

/// Replaces absent cells with the column defaults; nothing else changes.
std::vector<FusedRecord> impute(std::vector<FusedRecord> table);

// ---------------------------------------------------- encoding and scaling

struct ColumnInfo {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  std::vector<std::string> categories;  // code i <-> categories[i], lexicographic
  bool operator==(const ColumnInfo&) const = default;
};

struct FeatureMatrix {
  Matrix values;
  std::vector<ColumnInfo> columns;
  std::vector<TimestampUs> ts_us;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
  std::vector<std::string> names() const;
  /// Throws Error{ColumnNotFound}.
  std::size_t column_index(std::string_view name) const;
  FeatureMatrix select_columns(const std::vector<std::size_t>& idx) const;
  FeatureMatrix select_rows(const std::vector<std::size_t>& idx) const;
};

/// Label-encodes categorical columns, passes numeric ones through.
/// Requires an imputed table.
FeatureMatrix encode(const std::vector<FusedRecord>& table);

enum class ScaleMethod { MinMax, LogThenMinMax, None };
std::string_view scale_method_name(ScaleMethod method) noexcept;
std::optional<ScaleMethod> parse_scale_method(std::string_view name) noexcept;

/// Throws Error{NonFiniteInput}.
FeatureMatrix scale(FeatureMatrix m, ScaleMethod method);

// ------------------------------------------------------------------ labels

inline constexpr std::string_view kNormal = "normal";
inline constexpr std::string_view kAttacked = "attacked";

enum class LabelMode { Snort, AttackWindow };
std::string_view label_mode_name(LabelMode mode) noexcept;
std::optional<LabelMode> parse_label_mode(std::string_view name) noexcept;

struct LabelVector {
  std::vector<std::string> labels;
  LabelMode mode = LabelMode::AttackWindow;
};

/// AttackWindow mode needs `windows` (Error{MissingWindows} otherwise);
/// membership is the closed interval [start_us, end_us].
LabelVector assign_labels(const std::vector<FusedRecord>& table, LabelMode mode,
                          const std::optional<std::vector<scenario::AttackWindow>>& windows);

// -------------------------------------------------------------------- CSV

/// Header: ts_us, the 28 column names, then `label` when labels are given.
/// Absent cells are empty fields.
void write_fused_csv(const std::filesystem::path& path, const std::vector<FusedRecord>& table,
                     const std::vector<std::string>* labels = nullptr);
std::string fused_csv(const std::vector<FusedRecord>& table, const std::vector<std::string>* labels = nullptr);

struct FusedCsv {
  std::vector<FusedRecord> table;
  std::vector<std::string> labels;  // empty when the file has no label column
};
FusedCsv read_fused_csv(const std::filesystem::path& path);

}  // namespace cpfusion::fusion
