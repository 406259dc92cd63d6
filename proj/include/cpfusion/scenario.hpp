#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpfusion/common.hpp"
#include "cpfusion/ingest.hpp"

// Synthetic master/outstation DNP3-over-TCP traffic with a man-in-the-middle
// attacker replaying the four use cases (binary commands, mixed commands,
// measurements then commands, measurements/commands/measurements).
namespace cpfusion::scenario {

enum class UseCase { UC1, UC2, UC3, UC4 };
enum class WindowKind { FCI, FDI, FDI_FCI };

std::string_view use_case_name(UseCase uc) noexcept;
std::optional<UseCase> parse_use_case(std::string_view name) noexcept;
std::string_view window_kind_name(WindowKind kind) noexcept;
std::optional<WindowKind> parse_window_kind(std::string_view name) noexcept;

/// Start of every generated capture (2020-09-13T12:26:40Z).
inline constexpr TimestampUs kEpochUs = 1'600'000'000'000'000;
inline constexpr std::string_view kAttackerMac = "02:00:00:00:00:99";
inline constexpr std::uint16_t kOutstationPort = 20000;

struct ScenarioSpec {
  UseCase use_case = UseCase::UC1;
  int n_masters = 1;
  double polling_interval_s = 30.0;
  int n_outstations = 4;
  double duration_s = 1800.0;
  bool attack = true;
  double attack_start_s = 600.0;
  double attack_end_s = 1500.0;
  double snort_detect_prob = 0.8;
  double snort_false_alarm_rate = 0.05;
  double mitm_delay_factor = 3.0;
  std::uint64_t seed = 1;

  // Free knobs with no canonical value.
  int n_targets = 1;                  // outstations 0..n_targets-1 are intercepted
  double jitter_fraction = 0.05;      // poll jitter, fraction of the interval
  double base_rtt_ms = 5.0;
  double retrans_prob = 0.02;         // per data segment, outside interception
  double mitm_retrans_prob = 0.15;    // per intercepted data segment
  double rto_ms = 200.0;
  double fdi_min_factor = 1.5;
  double fdi_max_factor = 3.0;
  double grid_response_factor = 1.3;  // analog shift after the first false command

  /// Throws Error{InvalidArgument} naming the violated invariant.
  void validate() const;
};

struct AttackWindow {
  TimestampUs start_us = 0;
  TimestampUs end_us = 0;
  WindowKind kind = WindowKind::FCI;

  bool contains(TimestampUs t) const noexcept { return start_us <= t && t <= end_us; }
  bool operator==(const AttackWindow&) const = default;
};

std::vector<AttackWindow> ground_truth_windows(const ScenarioSpec& spec);

/// Counters recorded while generating; they let tests check the emitted
/// files against what was injected.
struct GenerationStats {
  std::int64_t poll_exchanges = 0;
  std::int64_t data_segments = 0;
  std::int64_t injected_retransmissions = 0;
  std::int64_t injected_commands = 0;
  std::int64_t tampered_responses = 0;
  std::int64_t intercepted_packets = 0;

  bool operator==(const GenerationStats&) const = default;
};

struct Manifest {
  ScenarioSpec spec;
  std::vector<AttackWindow> windows;
  TimestampUs jitter_bound_us = 0;  // each poll deviates from its slot by at most this
  GenerationStats stats;
};

/// In-memory result of a generator run, sorted by timestamp.
struct GeneratedData {
  std::vector<ingest::RawPacket> packets;
  std::vector<ingest::FlowEvent> flows;
  std::vector<ingest::AlertEvent> alerts;
  Manifest manifest;
};

struct ScenarioBundle {
  std::filesystem::path capture_path;
  std::filesystem::path flow_path;
  std::filesystem::path alert_path;
  std::filesystem::path manifest_path;
  std::vector<AttackWindow> windows;
  Manifest manifest;
};

GeneratedData generate(const ScenarioSpec& spec);

/// Writes capture.jsonl, flows.jsonl, alerts.jsonl and manifest.json into
/// `out_dir` (created if missing). Throws Error{Io} when it is unwritable.
ScenarioBundle generate_scenario(const ScenarioSpec& spec, const std::filesystem::path& out_dir);

/// Re-reads a bundle directory written by generate_scenario.
ScenarioBundle load_bundle(const std::filesystem::path& dir);

std::string manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(std::string_view text);

// Node addressing, fixed so tests can assert on it.
std::string master_mac(int master);
std::string outstation_mac(int outstation);
std::string master_ip(int master);
std::string outstation_ip(int outstation);
std::uint16_t master_port(int outstation);
std::uint16_t master_link_address(int master);
std::uint16_t outstation_link_address(int outstation);

}  // namespace cpfusion::scenario
