#include "cpfusion/fusion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace cpfusion::fusion {

namespace {

template <typename RowT>
void require_sorted(const std::vector<RowT>& rows, const char* what) {
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].ts_us < rows[i - 1].ts_us) {
      throw Error(Errc::UnsortedInput, fmt::format("{}: row {} precedes its predecessor", what, i));
    }
  }
}

double as_number(const Cell& cell, std::string_view column) {
  if (!cell) throw Error(Errc::InvalidArgument, fmt::format("column '{}' has an absent cell", column));
  if (const auto* d = std::get_if<double>(&*cell)) return *d;
  const auto& s = std::get<std::string>(*cell);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(Errc::ParseError, fmt::format("column '{}': '{}' is not numeric", column, s));
  }
  return v;
}

std::string as_text(const Cell& cell, std::string_view column) {
  if (!cell) throw Error(Errc::InvalidArgument, fmt::format("column '{}' has an absent cell", column));
  if (const auto* d = std::get_if<double>(&*cell)) return format_number(*d);
  return std::get<std::string>(*cell);
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line, std::int64_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw Error(Errc::ParseError, fmt::format("line {}: unterminated quote", line_no), line_no);
  fields.push_back(std::move(cur));
  return fields;
}

std::string cell_text(const Cell& cell) {
  if (!cell) return {};
  if (const auto* d = std::get_if<double>(&*cell)) return format_number(*d);
  return std::get<std::string>(*cell);
}

}  // namespace

void apply_packet_annotations(std::vector<CyberRecord>& cb, const std::vector<std::uint8_t>& retrans,
                              const std::vector<std::optional<double>>& rtt_ms) {
  if (retrans.size() != cb.size() || rtt_ms.size() != cb.size()) {
    throw Error(Errc::LengthMismatch, "annotations are not aligned with the cyber table");
  }
  for (std::size_t i = 0; i < cb.size(); ++i) {
    // only TCP rows carry a retransmission verdict
    if (cb[i][Column::TcpLen]) cb[i][Column::Retrans] = CellValue{static_cast<double>(retrans[i])};
    if (rtt_ms[i]) cb[i][Column::Rtt] = CellValue{*rtt_ms[i]};
  }
}

std::vector<CyberRecord> merge_flow_features(std::vector<CyberRecord> cb,
                                             const std::vector<ingest::FlowEvent>& flows) {
  require_sorted(cb, "cyber table");
  const std::size_t n = cb.size();
  if (n == 0 || flows.empty()) return cb;
  std::vector<TimestampUs> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = cb[i].ts_us;

  // The three conditions together say [t_i, t_{i+1}] meets [start, end], i.e.
  // t_i <= end and t_{i+1} >= start; contributing records form a contiguous
  // range, accumulated with difference arrays.
  std::vector<std::int64_t> d_cnt(n + 1, 0), d_fin(n + 1, 0), d_pkts(n + 1, 0);
  for (const auto& f : flows) {
    const TimestampUs s = std::min(f.event_start_us, f.event_end_us);
    const TimestampUs e = std::max(f.event_start_us, f.event_end_us);
    const auto hi_it = std::upper_bound(t.begin(), t.end(), e);
    if (hi_it == t.begin()) continue;
    const auto hi = static_cast<std::size_t>(hi_it - t.begin());  // exclusive
    const auto first_ge = static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), s) - t.begin());
    const std::size_t lo = first_ge == 0 ? 0 : first_ge - 1;
    if (lo >= hi) continue;
    d_cnt[lo] += 1;
    d_cnt[hi] -= 1;
    const std::int64_t fin = f.flow_final ? 1 : 0;
    d_fin[lo] += fin;
    d_fin[hi] -= fin;
    d_pkts[lo] += f.source_packets;
    d_pkts[hi] -= f.source_packets;
  }
  std::int64_t cnt = 0, fin = 0, pkts = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cnt += d_cnt[i];
    fin += d_fin[i];
    pkts += d_pkts[i];
    if (cnt == 0) continue;
    cb[i][Column::FlowCnt] = CellValue{static_cast<double>(cnt)};
    cb[i][Column::FlowFinCnt] = CellValue{static_cast<double>(fin)};
    cb[i][Column::Packets] = CellValue{static_cast<double>(pkts)};
  }
  return cb;
}

std::vector<CyberRecord> merge_alerts(std::vector<CyberRecord> cb, const std::vector<ingest::AlertEvent>& alerts) {
  require_sorted(cb, "cyber table");
  if (cb.empty()) return cb;
  std::vector<TimestampUs> t(cb.size());
  for (std::size_t i = 0; i < cb.size(); ++i) t[i] = cb[i].ts_us;
  std::vector<std::optional<ingest::AlertType>> best(cb.size());
  for (const auto& a : alerts) {
    const auto it = std::upper_bound(t.begin(), t.end(), a.ts_us);
    if (it == t.begin()) continue;
    auto& slot = best[static_cast<std::size_t>(it - t.begin()) - 1];
    if (!slot || ingest::alert_priority(a.alert_type) > ingest::alert_priority(*slot)) slot = a.alert_type;
  }
  for (std::size_t i = 0; i < cb.size(); ++i) {
    if (!best[i]) continue;
    cb[i][Column::SnortAlert] = CellValue{1.0};
    cb[i][Column::AlertType] = CellValue{std::string(ingest::alert_type_name(*best[i]))};
  }
  return cb;
}

std::string payload_signature(const dnp3::PhysicalRecord& rec) {
  using dnp3::PointKind;
  std::vector<std::string> parts;
  for (auto kind : {PointKind::BinaryInput, PointKind::BinaryOutput, PointKind::AnalogInput,
                    PointKind::AnalogOutput, PointKind::Counter, PointKind::Class}) {
    const auto count_it = rec.point_counts.find(kind);
    if (count_it == rec.point_counts.end()) continue;
    const auto tag = dnp3::point_kind_tag(kind);
    const auto values_it = rec.al_payload.find(kind);
    if (values_it == rec.al_payload.end() || values_it->second.empty()) {
      parts.push_back(fmt::format("{}:{}", tag, count_it->second));
      continue;
    }
    double sum = 0.0;
    for (double v : values_it->second) sum += v;
    const auto mean = static_cast<long long>(std::llround(sum / static_cast<double>(values_it->second.size())));
    parts.push_back(fmt::format("{}:{}:{:08d}", tag, count_it->second, mean));
  }
  if (parts.empty()) return "EMPTY";
  return fmt::format("{}", fmt::join(parts, "|"));
}

PhysicalCells physical_cells(const dnp3::PhysicalRecord& rec) {
  PhysicalCells c;
  c[0] = CellValue{static_cast<double>(rec.ll_src)};
  c[1] = CellValue{static_cast<double>(rec.ll_dest)};
  c[2] = CellValue{static_cast<double>(rec.ll_len)};
  c[3] = CellValue{format_flags(rec.ll_ctrl)};
  c[4] = CellValue{format_flags(rec.tl_ctrl)};
  c[5] = CellValue{static_cast<double>(rec.function_code)};
  c[6] = CellValue{format_flags(rec.al_ctrl)};
  c[7] = CellValue{static_cast<double>(rec.obj_count)};
  c[8] = CellValue{payload_signature(rec)};
  return c;
}

std::vector<PhysicalEntry> extract_physical_entries(const std::vector<ingest::RawPacket>& pkts) {
  std::vector<PhysicalEntry> out;
  for (std::size_t i = 0; i < pkts.size(); ++i) {
    const auto& p = pkts[i];
    if (!p.dnp3_bytes) continue;
    dnp3::LinkFrame frame;
    try {
      frame = dnp3::parse_link_frame(*p.dnp3_bytes);
    } catch (const Error& e) {
      spdlog::warn("packet {}: DNP3 link layer rejected ({})", i, e.what());
      continue;
    }
    PhysicalEntry entry;
    entry.ts_us = p.ts_us;
    entry.row = i;
    try {
      entry.cells = physical_cells(dnp3::extract_physical(frame));
    } catch (const Error& e) {
      spdlog::debug("packet {}: application layer not decoded ({})", i, e.what());
      entry.cells[0] = CellValue{static_cast<double>(frame.ll_src)};
      entry.cells[1] = CellValue{static_cast<double>(frame.ll_dest)};
      entry.cells[2] = CellValue{static_cast<double>(frame.ll_len)};
      entry.cells[3] = CellValue{format_flags(frame.ll_ctrl)};
      if (!frame.user_data.empty()) entry.cells[4] = CellValue{format_flags(frame.user_data[0])};
    }
    out.push_back(std::move(entry));
  }
  return out;
}

std::string_view physical_mode_name(PhysicalMode mode) noexcept {
  return mode == PhysicalMode::Impute ? "impute" : "drop";
}

std::optional<PhysicalMode> parse_physical_mode(std::string_view name) noexcept {
  if (name == "impute") return PhysicalMode::Impute;
  if (name == "drop") return PhysicalMode::Drop;
  return std::nullopt;
}

std::vector<FusedRecord> fuse_physical(const std::vector<CyberRecord>& cb, const std::vector<PhysicalEntry>& phys,
                                       PhysicalMode mode) {
  std::vector<const PhysicalCells*> joined(cb.size(), nullptr);
  // timestamp -> rows not yet claimed, in stable order
  std::map<TimestampUs, std::vector<std::size_t>> by_ts;
  bool need_ts_index = false;
  for (const auto& e : phys) need_ts_index = need_ts_index || !e.row;
  if (need_ts_index) {
    for (std::size_t i = 0; i < cb.size(); ++i) by_ts[cb[i].ts_us].push_back(i);
  }
  std::size_t duplicates = 0;
  std::map<TimestampUs, std::size_t> cursor;
  for (const auto& e : phys) {
    std::size_t row = 0;
    if (e.row) {
      row = *e.row;
      if (row >= cb.size() || cb[row].ts_us != e.ts_us) {
        throw Error(Errc::LengthMismatch, fmt::format("physical entry for row {} does not match its timestamp", row));
      }
    } else {
      const auto it = by_ts.find(e.ts_us);
      if (it == by_ts.end()) {
        spdlog::warn("physical record at {} has no cyber row", e.ts_us);
        continue;
      }
      auto& k = cursor[e.ts_us];
      if (it->second.size() > 1) ++duplicates;
      if (k >= it->second.size()) {
        spdlog::warn("more physical records than cyber rows at {}", e.ts_us);
        continue;
      }
      row = it->second[k++];
    }
    joined[row] = &e.cells;
  }
  if (duplicates > 0) spdlog::warn("{} physical records joined on duplicate timestamps (stable order)", duplicates);

  std::vector<FusedRecord> out;
  out.reserve(cb.size());
  for (std::size_t i = 0; i < cb.size(); ++i) {
    if (!joined[i] && mode == PhysicalMode::Drop) continue;
    FusedRecord r;
    r.ts_us = cb[i].ts_us;
    std::copy(cb[i].cells.begin(), cb[i].cells.end(), r.cells.begin());
    if (joined[i]) std::copy(joined[i]->begin(), joined[i]->end(), r.cells.begin() + kNumCyberColumns);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<FusedRecord> fuse_sources(const std::vector<ingest::RawPacket>& pkts,
                                      const std::vector<ingest::FlowEvent>& flows,
                                      const std::vector<ingest::AlertEvent>& alerts, PhysicalMode mode) {
  std::vector<CyberRecord> cb;
  cb.reserve(pkts.size());
  for (const auto& p : pkts) cb.push_back(ingest::extract_cyber_base(p));
  apply_packet_annotations(cb, ingest::annotate_retransmissions(pkts), ingest::annotate_rtt(pkts));
  cb = merge_alerts(std::move(cb), alerts);
  cb = merge_flow_features(std::move(cb), flows);
  return fuse_physical(cb, extract_physical_entries(pkts), mode);
}

std::vector<FusedRecord> impute(std::vector<FusedRecord> table) {
  for (auto& r : table) {
    for (std::size_t c = 0; c < kNumColumns; ++c) {
      if (!r.cells[c]) r.cells[c] = column_default(static_cast<Column>(c));
    }
  }
  return table;
}

std::vector<std::string> FeatureMatrix::names() const {
  std::vector<std::string> out;
  for (const auto& c : columns) out.push_back(c.name);
  return out;
}

std::size_t FeatureMatrix::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return i;
  }
  throw Error(Errc::ColumnNotFound, fmt::format("no column named '{}'", name));
}

FeatureMatrix FeatureMatrix::select_columns(const std::vector<std::size_t>& idx) const {
  FeatureMatrix out;
  out.values.resize(values.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] >= cols()) throw Error(Errc::ColumnNotFound, fmt::format("column index {} out of range", idx[j]));
    out.values.col(static_cast<Eigen::Index>(j)) = values.col(static_cast<Eigen::Index>(idx[j]));
    out.columns.push_back(columns[idx[j]]);
  }
  out.ts_us = ts_us;
  return out;
}

FeatureMatrix FeatureMatrix::select_rows(const std::vector<std::size_t>& idx) const {
  FeatureMatrix out;
  out.columns = columns;
  out.values.resize(static_cast<Eigen::Index>(idx.size()), values.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.values.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(idx[i]));
    if (!ts_us.empty()) out.ts_us.push_back(ts_us[idx[i]]);
  }
  return out;
}

FeatureMatrix encode(const std::vector<FusedRecord>& table) {
  FeatureMatrix m;
  const auto n = static_cast<Eigen::Index>(table.size());
  m.values.resize(n, static_cast<Eigen::Index>(kNumColumns));
  for (const auto& r : table) m.ts_us.push_back(r.ts_us);
  for (std::size_t c = 0; c < kNumColumns; ++c) {
    const auto& spec = column_spec(c);
    ColumnInfo info{std::string(spec.name), spec.kind, {}};
    const auto col = static_cast<Eigen::Index>(c);
    if (spec.kind == ColumnKind::Numeric) {
      for (Eigen::Index i = 0; i < n; ++i) m.values(i, col) = as_number(table[static_cast<std::size_t>(i)].cells[c], spec.name);
    } else {
      std::set<std::string> cats;
      for (const auto& r : table) cats.insert(as_text(r.cells[c], spec.name));
      info.categories.assign(cats.begin(), cats.end());
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto text = as_text(table[static_cast<std::size_t>(i)].cells[c], spec.name);
        const auto pos = std::lower_bound(info.categories.begin(), info.categories.end(), text);
        m.values(i, col) = static_cast<double>(pos - info.categories.begin());
      }
    }
    m.columns.push_back(std::move(info));
  }
  return m;
}

std::string_view scale_method_name(ScaleMethod method) noexcept {
  switch (method) {
    case ScaleMethod::MinMax: return "minmax";
    case ScaleMethod::LogThenMinMax: return "log_then_minmax";
    case ScaleMethod::None: return "none";
  }
  return "none";
}

std::optional<ScaleMethod> parse_scale_method(std::string_view name) noexcept {
  for (auto m : {ScaleMethod::MinMax, ScaleMethod::LogThenMinMax, ScaleMethod::None}) {
    if (scale_method_name(m) == name) return m;
  }
  return std::nullopt;
}

FeatureMatrix scale(FeatureMatrix m, ScaleMethod method) {
  if (!m.values.allFinite()) throw Error(Errc::NonFiniteInput, "feature matrix has non-finite entries");
  if (method == ScaleMethod::None || m.values.rows() == 0) return m;
  for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
    auto col = m.values.col(c);
    const bool numeric = static_cast<std::size_t>(c) >= m.columns.size() ||
                         m.columns[static_cast<std::size_t>(c)].kind == ColumnKind::Numeric;
    if (method == ScaleMethod::LogThenMinMax && numeric) {
      // sentinel columns (-1 defaults) are shifted so the log argument stays >= 1
      const double shift = std::min(col.minCoeff(), 0.0);
      col = (col.array() - shift).log1p().matrix();
    }
    const double lo = col.minCoeff();
    const double hi = col.maxCoeff();
    if (hi - lo > 0.0) {
      col = ((col.array() - lo) / (hi - lo)).matrix();
    } else {
      col.setZero();
    }
  }
  return m;
}

std::string_view label_mode_name(LabelMode mode) noexcept {
  return mode == LabelMode::Snort ? "snort" : "attack_window";
}

std::optional<LabelMode> parse_label_mode(std::string_view name) noexcept {
  if (name == "snort") return LabelMode::Snort;
  if (name == "attack_window") return LabelMode::AttackWindow;
  return std::nullopt;
}

LabelVector assign_labels(const std::vector<FusedRecord>& table, LabelMode mode,
                          const std::optional<std::vector<scenario::AttackWindow>>& windows) {
  LabelVector out;
  out.mode = mode;
  out.labels.reserve(table.size());
  if (mode == LabelMode::AttackWindow) {
    if (!windows) throw Error(Errc::MissingWindows, "attack_window labels need ground-truth windows");
    for (const auto& r : table) {
      const bool hit = std::any_of(windows->begin(), windows->end(),
                                   [&](const scenario::AttackWindow& w) { return w.contains(r.ts_us); });
      out.labels.emplace_back(hit ? kAttacked : kNormal);
    }
  } else {
    for (const auto& r : table) {
      const auto& cell = r[Column::SnortAlert];
      const bool alert = cell && as_number(cell, "Snort Alert") == 1.0;
      out.labels.emplace_back(alert ? kAttacked : kNormal);
    }
  }
  return out;
}

std::string fused_csv(const std::vector<FusedRecord>& table, const std::vector<std::string>* labels) {
  if (labels && labels->size() != table.size()) throw Error(Errc::LengthMismatch, "labels do not match the table");
  std::string out = "ts_us";
  for (std::size_t c = 0; c < kNumColumns; ++c) {
    out += ',';
    out += csv_field(column_spec(c).name);
  }
  if (labels) out += ",label";
  out += '\n';
  for (std::size_t i = 0; i < table.size(); ++i) {
    out += std::to_string(table[i].ts_us);
    for (const auto& cell : table[i].cells) {
      out += ',';
      out += csv_field(cell_text(cell));
    }
    if (labels) {
      out += ',';
      out += csv_field((*labels)[i]);
    }
    out += '\n';
  }
  return out;
}

void write_fused_csv(const std::filesystem::path& path, const std::vector<FusedRecord>& table,
                     const std::vector<std::string>* labels) {
  const auto text = fused_csv(table, labels);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw Error(Errc::Io, fmt::format("write failed on {}", path.string()));
}

FusedCsv read_fused_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, fmt::format("cannot open {}", path.string()));
  std::string line;
  std::int64_t line_no = 0;
  if (!std::getline(in, line)) throw Error(Errc::ParseError, "missing header", 1);
  ++line_no;
  const auto header = split_csv_line(line, line_no);
  const bool has_label = header.size() == kNumColumns + 2 && header.back() == "label";
  if (header.size() != kNumColumns + 1 + (has_label ? 1 : 0) || header[0] != "ts_us") {
    throw Error(Errc::ParseError, "header does not match the fused schema", 1);
  }
  for (std::size_t c = 0; c < kNumColumns; ++c) {
    if (header[c + 1] != column_spec(c).name) {
      throw Error(Errc::ParseError, fmt::format("unexpected column '{}'", header[c + 1]), 1);
    }
  }
  FusedCsv out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line, line_no);
    if (fields.size() != header.size()) {
      throw Error(Errc::ParseError, fmt::format("line {}: expected {} fields", line_no, header.size()), line_no);
    }
    FusedRecord r;
    auto [p, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), r.ts_us);
    if (ec != std::errc()) throw Error(Errc::ParseError, fmt::format("line {}: bad ts_us", line_no), line_no);
    for (std::size_t c = 0; c < kNumColumns; ++c) {
      const auto& f = fields[c + 1];
      if (f.empty()) continue;
      if (column_spec(c).kind == ColumnKind::Numeric) {
        double v = 0.0;
        auto [q, ec2] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec2 != std::errc() || q != f.data() + f.size()) {
          throw Error(Errc::ParseError, fmt::format("line {}: '{}' is not numeric", line_no, f), line_no);
        }
        r.cells[c] = CellValue{v};
      } else {
        r.cells[c] = CellValue{f};
      }
    }
    out.table.push_back(std::move(r));
    if (has_label) out.labels.push_back(fields.back());
  }
  return out;
}

}  // namespace cpfusion::fusion
