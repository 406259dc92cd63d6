#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpfusion/common.hpp"
#include "cpfusion/schema.hpp"

// Loading of the three cyber-side sensor streams (packet capture, flow
// events, IDS alerts) and the per-packet retransmission / RTT annotations.
namespace cpfusion::ingest {

struct RawPacket {
  TimestampUs ts_us = 0;
  std::optional<std::int64_t> frame_len;
  std::optional<std::string> frame_protocols;
  std::optional<std::string> eth_src;
  std::optional<std::string> eth_dst;
  std::optional<std::string> ip_src;
  std::optional<std::string> ip_dst;
  std::optional<std::int64_t> ip_len;
  std::optional<std::int64_t> ip_flags;
  std::optional<std::int64_t> src_port;
  std::optional<std::int64_t> dst_port;
  std::optional<std::int64_t> tcp_len;
  std::optional<std::int64_t> tcp_flags;
  std::optional<std::uint32_t> tcp_seq;
  std::optional<std::uint32_t> tcp_ack;
  std::optional<std::vector<std::uint8_t>> dnp3_bytes;

  bool is_tcp_data() const { return tcp_seq && tcp_len && *tcp_len > 0; }
  bool operator==(const RawPacket&) const = default;
};

struct FlowEvent {
  TimestampUs event_start_us = 0;
  TimestampUs event_end_us = 0;
  std::string flow_id;
  bool flow_final = false;
  std::int64_t source_packets = 0;
  std::int64_t flow_duration_us = 0;

  bool operator==(const FlowEvent&) const = default;
};

enum class AlertType { Dnp3, ArpSpoof, IcmpFlood, Other };

std::string_view alert_type_name(AlertType type) noexcept;
std::optional<AlertType> parse_alert_type(std::string_view name) noexcept;
/// Merge priority: a larger value wins when several alerts share a record.
int alert_priority(AlertType type) noexcept;

struct AlertEvent {
  TimestampUs ts_us = 0;
  AlertType alert_type = AlertType::Other;
  std::int64_t signature_id = 0;

  bool operator==(const AlertEvent&) const = default;
};

/// The 19 cyber/security columns of one packet row.
using CyberRecord = Row<kNumCyberColumns>;

struct LoadDiagnostics {
  bool reordered = false;  // timestamps were not monotone; a stable sort was applied
};

// JSON-lines codecs. Parsers throw Error{ParseError, detail = line number}.
RawPacket parse_capture_line(std::string_view line, std::int64_t line_no);
std::string format_capture_line(const RawPacket& pkt);
FlowEvent parse_flow_line(std::string_view line, std::int64_t line_no);
std::string format_flow_line(const FlowEvent& flow);
AlertEvent parse_alert_line(std::string_view line, std::int64_t line_no);
std::string format_alert_line(const AlertEvent& alert);

/// Packets in file order (stable-sorted by ts_us when the file is not monotone).
std::vector<RawPacket> load_capture(const std::filesystem::path& path,
                                    LoadDiagnostics* diagnostics = nullptr);

/// Optional ingestion filter mirroring the flow-index query predicates.
struct FlowFilter {
  std::optional<std::int64_t> max_duration_us;
  bool final_only = false;
};

std::vector<FlowEvent> load_flow_events(const std::filesystem::path& path,
                                        const FlowFilter& filter = {});
std::vector<AlertEvent> load_alert_events(const std::filesystem::path& path);

/// Copies the first 12 packet columns; the rest stay absent.
CyberRecord extract_cyber_base(const RawPacket& pkt);

/// 1 where an earlier data segment has the same (ip_src, ip_dst, src_port,
/// dst_port, tcp_seq). Requires packets sorted by ts_us.
std::vector<std::uint8_t> annotate_retransmissions(const std::vector<RawPacket>& pkts);

/// RTT in milliseconds for each data segment: time until the first later
/// reverse-direction packet whose ack covers seq + len. Absent otherwise.
std::vector<std::optional<double>> annotate_rtt(const std::vector<RawPacket>& pkts);

}  // namespace cpfusion::ingest
