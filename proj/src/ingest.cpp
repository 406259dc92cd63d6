#include "cpfusion/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cpfusion/dnp3.hpp"
#include <spdlog/spdlog.h>

namespace cpfusion::ingest {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

[[noreturn]] void parse_error(std::int64_t line_no, const std::string& what) {
  throw Error(Errc::ParseError, fmt::format("line {}: {}", line_no, what), line_no);
}

json parse_object_line(std::string_view line, std::int64_t line_no) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) parse_error(line_no, "not a JSON object");
  return j;
}

template <typename T>
std::optional<T> opt_field(const json& j, const char* key, std::int64_t line_no) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    parse_error(line_no, fmt::format("field '{}' has the wrong type", key));
  }
}

template <typename T>
T req_field(const json& j, const char* key, std::int64_t line_no) {
  auto v = opt_field<T>(j, key, line_no);
  if (!v) parse_error(line_no, fmt::format("missing field '{}'", key));
  return *v;
}

template <typename F>
void for_each_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, fmt::format("cannot open {}", path.string()));
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    f(line, line_no);
  }
}

template <typename T>
void put_opt(ordered_json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

std::string direction_key(const RawPacket& p) {
  return fmt::format("{}|{}|{}|{}", *p.ip_src, *p.ip_dst, *p.src_port, *p.dst_port);
}

std::string reverse_direction_key(const RawPacket& p) {
  return fmt::format("{}|{}|{}|{}", *p.ip_dst, *p.ip_src, *p.dst_port, *p.src_port);
}

bool has_tcp_endpoints(const RawPacket& p) {
  return p.ip_src && p.ip_dst && p.src_port && p.dst_port;
}

void require_sorted(const std::vector<RawPacket>& pkts) {
  for (std::size_t i = 1; i < pkts.size(); ++i) {
    if (pkts[i].ts_us < pkts[i - 1].ts_us) {
      throw Error(Errc::UnsortedInput, fmt::format("packet {} precedes its predecessor", i));
    }
  }
}

}  // namespace

std::string_view alert_type_name(AlertType type) noexcept {
  switch (type) {
    case AlertType::Dnp3: return "DNP3";
    case AlertType::ArpSpoof: return "ARP_SPOOF";
    case AlertType::IcmpFlood: return "ICMP_FLOOD";
    case AlertType::Other: return "OTHER";
  }
  return "OTHER";
}

std::optional<AlertType> parse_alert_type(std::string_view name) noexcept {
  for (auto t : {AlertType::Dnp3, AlertType::ArpSpoof, AlertType::IcmpFlood, AlertType::Other}) {
    if (alert_type_name(t) == name) return t;
  }
  return std::nullopt;
}

int alert_priority(AlertType type) noexcept {
  switch (type) {
    case AlertType::Dnp3: return 3;
    case AlertType::ArpSpoof: return 2;
    case AlertType::IcmpFlood: return 1;
    case AlertType::Other: return 0;
  }
  return 0;
}

RawPacket parse_capture_line(std::string_view line, std::int64_t line_no) {
  const json j = parse_object_line(line, line_no);
  RawPacket p;
  p.ts_us = req_field<std::int64_t>(j, "ts_us", line_no);
  p.frame_len = opt_field<std::int64_t>(j, "frame_len", line_no);
  p.frame_protocols = opt_field<std::string>(j, "frame_protocols", line_no);
  p.eth_src = opt_field<std::string>(j, "eth_src", line_no);
  p.eth_dst = opt_field<std::string>(j, "eth_dst", line_no);
  p.ip_src = opt_field<std::string>(j, "ip_src", line_no);
  p.ip_dst = opt_field<std::string>(j, "ip_dst", line_no);
  p.ip_len = opt_field<std::int64_t>(j, "ip_len", line_no);
  p.ip_flags = opt_field<std::int64_t>(j, "ip_flags", line_no);
  p.src_port = opt_field<std::int64_t>(j, "src_port", line_no);
  p.dst_port = opt_field<std::int64_t>(j, "dst_port", line_no);
  p.tcp_len = opt_field<std::int64_t>(j, "tcp_len", line_no);
  p.tcp_flags = opt_field<std::int64_t>(j, "tcp_flags", line_no);
  p.tcp_seq = opt_field<std::uint32_t>(j, "tcp_seq", line_no);
  p.tcp_ack = opt_field<std::uint32_t>(j, "tcp_ack", line_no);
  for (const auto& port : {p.src_port, p.dst_port}) {
    if (port && (*port < 0 || *port > 65535)) parse_error(line_no, "port outside [0, 65535]");
  }
  if (auto hex = opt_field<std::string>(j, "dnp3_hex", line_no)) {
    try {
      p.dnp3_bytes = dnp3::from_hex(*hex);
    } catch (const Error& e) {
      parse_error(line_no, e.what());
    }
  }
  return p;
}

std::string format_capture_line(const RawPacket& p) {
  ordered_json j;
  j["ts_us"] = p.ts_us;
  put_opt(j, "frame_len", p.frame_len);
  put_opt(j, "frame_protocols", p.frame_protocols);
  put_opt(j, "eth_src", p.eth_src);
  put_opt(j, "eth_dst", p.eth_dst);
  put_opt(j, "ip_src", p.ip_src);
  put_opt(j, "ip_dst", p.ip_dst);
  put_opt(j, "ip_len", p.ip_len);
  put_opt(j, "ip_flags", p.ip_flags);
  put_opt(j, "src_port", p.src_port);
  put_opt(j, "dst_port", p.dst_port);
  put_opt(j, "tcp_len", p.tcp_len);
  put_opt(j, "tcp_flags", p.tcp_flags);
  put_opt(j, "tcp_seq", p.tcp_seq);
  put_opt(j, "tcp_ack", p.tcp_ack);
  if (p.dnp3_bytes) j["dnp3_hex"] = dnp3::to_hex(*p.dnp3_bytes);
  return j.dump();
}

FlowEvent parse_flow_line(std::string_view line, std::int64_t line_no) {
  const json j = parse_object_line(line, line_no);
  FlowEvent f;
  f.event_start_us = req_field<std::int64_t>(j, "event_start_us", line_no);
  f.event_end_us = req_field<std::int64_t>(j, "event_end_us", line_no);
  f.flow_id = opt_field<std::string>(j, "flow_id", line_no).value_or("");
  f.flow_final = opt_field<bool>(j, "flow_final", line_no).value_or(false);
  f.source_packets = opt_field<std::int64_t>(j, "source_packets", line_no).value_or(0);
  f.flow_duration_us = opt_field<std::int64_t>(j, "flow_duration_us", line_no)
                           .value_or(f.event_end_us - f.event_start_us);
  if (f.event_end_us < f.event_start_us) parse_error(line_no, "event_end_us precedes event_start_us");
  return f;
}

std::string format_flow_line(const FlowEvent& f) {
  ordered_json j;
  j["event_start_us"] = f.event_start_us;
  j["event_end_us"] = f.event_end_us;
  j["flow_id"] = f.flow_id;
  j["flow_final"] = f.flow_final;
  j["source_packets"] = f.source_packets;
  j["flow_duration_us"] = f.flow_duration_us;
  return j.dump();
}

AlertEvent parse_alert_line(std::string_view line, std::int64_t line_no) {
  const json j = parse_object_line(line, line_no);
  AlertEvent a;
  a.ts_us = req_field<std::int64_t>(j, "ts_us", line_no);
  const auto name = req_field<std::string>(j, "alert_type", line_no);
  const auto type = parse_alert_type(name);
  if (!type) parse_error(line_no, fmt::format("unknown alert_type '{}'", name));
  a.alert_type = *type;
  a.signature_id = opt_field<std::int64_t>(j, "signature_id", line_no).value_or(0);
  return a;
}

std::string format_alert_line(const AlertEvent& a) {
  ordered_json j;
  j["ts_us"] = a.ts_us;
  j["alert_type"] = alert_type_name(a.alert_type);
  j["signature_id"] = a.signature_id;
  return j.dump();
}

std::vector<RawPacket> load_capture(const std::filesystem::path& path, LoadDiagnostics* diagnostics) {
  std::vector<RawPacket> pkts;
  for_each_line(path, [&](std::string_view line, std::int64_t no) {
    pkts.push_back(parse_capture_line(line, no));
  });
  const bool sorted = std::is_sorted(pkts.begin(), pkts.end(),
                                     [](const auto& a, const auto& b) { return a.ts_us < b.ts_us; });
  if (!sorted) {
    spdlog::warn("{}: timestamps not monotone, applying stable sort", path.string());
    std::stable_sort(pkts.begin(), pkts.end(),
                     [](const auto& a, const auto& b) { return a.ts_us < b.ts_us; });
  }
  if (diagnostics) diagnostics->reordered = !sorted;
  return pkts;
}

std::vector<FlowEvent> load_flow_events(const std::filesystem::path& path, const FlowFilter& filter) {
  std::vector<FlowEvent> flows;
  for_each_line(path, [&](std::string_view line, std::int64_t no) {
    auto f = parse_flow_line(line, no);
    if (filter.final_only && !f.flow_final) return;
    if (filter.max_duration_us && (f.flow_duration_us < 0 || f.flow_duration_us > *filter.max_duration_us)) return;
    flows.push_back(std::move(f));
  });
  std::stable_sort(flows.begin(), flows.end(),
                   [](const auto& a, const auto& b) { return a.event_start_us < b.event_start_us; });
  return flows;
}

std::vector<AlertEvent> load_alert_events(const std::filesystem::path& path) {
  std::vector<AlertEvent> alerts;
  for_each_line(path, [&](std::string_view line, std::int64_t no) {
    alerts.push_back(parse_alert_line(line, no));
  });
  std::stable_sort(alerts.begin(), alerts.end(),
                   [](const auto& a, const auto& b) { return a.ts_us < b.ts_us; });
  return alerts;
}

CyberRecord extract_cyber_base(const RawPacket& p) {
  CyberRecord r;
  r.ts_us = p.ts_us;
  auto num = [](const auto& v) -> Cell {
    if (!v) return std::nullopt;
    return CellValue{static_cast<double>(*v)};
  };
  auto str = [](const std::optional<std::string>& v) -> Cell {
    if (!v) return std::nullopt;
    return CellValue{*v};
  };
  auto flags = [](const std::optional<std::int64_t>& v) -> Cell {
    if (!v) return std::nullopt;
    return CellValue{format_flags(static_cast<unsigned>(*v))};
  };
  r[Column::FrameLen] = num(p.frame_len);
  r[Column::FrameProt] = str(p.frame_protocols);
  r[Column::EthSrc] = str(p.eth_src);
  r[Column::EthDst] = str(p.eth_dst);
  r[Column::IpSrc] = str(p.ip_src);
  r[Column::IpDst] = str(p.ip_dst);
  r[Column::IpLen] = num(p.ip_len);
  r[Column::IpFlags] = flags(p.ip_flags);
  r[Column::SrcPort] = num(p.src_port);
  r[Column::DestPort] = num(p.dst_port);
  r[Column::TcpLen] = num(p.tcp_len);
  r[Column::TcpFlags] = flags(p.tcp_flags);
  return r;
}

std::vector<std::uint8_t> annotate_retransmissions(const std::vector<RawPacket>& pkts) {
  require_sorted(pkts);
  std::vector<std::uint8_t> flags(pkts.size(), 0);
  std::unordered_map<std::string, char> seen;
  for (std::size_t i = 0; i < pkts.size(); ++i) {
    const auto& p = pkts[i];
    if (!p.is_tcp_data() || !has_tcp_endpoints(p)) continue;
    auto [it, inserted] = seen.try_emplace(fmt::format("{}|{}", direction_key(p), *p.tcp_seq), 0);
    if (!inserted) flags[i] = 1;
  }
  return flags;
}

std::vector<std::optional<double>> annotate_rtt(const std::vector<RawPacket>& pkts) {
  require_sorted(pkts);
  std::vector<std::optional<double>> rtt(pkts.size());
  // Outstanding segments per direction, keyed by the ack value that covers them.
  struct Pending {
    std::uint32_t end_seq;
    std::size_t index;
  };
  std::map<std::string, std::vector<Pending>> pending;
  for (std::size_t i = 0; i < pkts.size(); ++i) {
    const auto& p = pkts[i];
    if (!has_tcp_endpoints(p)) continue;
    if (p.tcp_ack) {
      auto it = pending.find(reverse_direction_key(p));
      if (it != pending.end()) {
        auto& list = it->second;
        std::erase_if(list, [&](const Pending& seg) {
          // serial-number comparison: ack - end_seq interpreted as signed
          const auto diff = static_cast<std::int32_t>(*p.tcp_ack - seg.end_seq);
          if (diff < 0) return false;
          rtt[seg.index] = static_cast<double>(p.ts_us - pkts[seg.index].ts_us) / 1000.0;
          return true;
        });
      }
    }
    if (p.is_tcp_data()) {
      const auto end_seq = *p.tcp_seq + static_cast<std::uint32_t>(*p.tcp_len);
      pending[direction_key(p)].push_back({end_seq, i});
    }
  }
  return rtt;
}

}  // namespace cpfusion::ingest
