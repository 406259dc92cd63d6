#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cpfusion/dnp3.hpp"
#include "cpfusion/ingest.hpp"
#include "cpfusion/scenario.hpp"

using namespace cpfusion;
using namespace cpfusion::scenario;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / "cpfusion_test_scenario" / name;
  fs::remove_all(d);
  return d;
}

ScenarioSpec small_spec() {
  ScenarioSpec s;
  s.n_masters = 2;
  s.n_outstations = 3;
  s.polling_interval_s = 30;
  s.duration_s = 900;
  s.attack_start_s = 300;
  s.attack_end_s = 700;
  s.seed = 7;
  return s;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("same seed gives byte-identical bundles") {
  auto spec = small_spec();
  spec.n_masters = 10;
  const auto a = generate_scenario(spec, temp_dir("det_a"));
  const auto b = generate_scenario(spec, temp_dir("det_b"));
  CHECK(slurp(a.capture_path) == slurp(b.capture_path));
  CHECK(slurp(a.flow_path) == slurp(b.flow_path));
  CHECK(slurp(a.alert_path) == slurp(b.alert_path));
  CHECK(slurp(a.manifest_path) == slurp(b.manifest_path));
  CHECK_FALSE(slurp(a.capture_path).empty());

  spec.seed = 8;
  const auto c = generate_scenario(spec, temp_dir("det_c"));
  CHECK(slurp(a.capture_path) != slurp(c.capture_path));
}

TEST_CASE("bundle files parse and the manifest round-trips") {
  const auto b = generate_scenario(small_spec(), temp_dir("parse"));
  const auto data = generate(small_spec());
  CHECK(ingest::load_capture(b.capture_path) == data.packets);
  CHECK(ingest::load_flow_events(b.flow_path) == data.flows);
  CHECK(ingest::load_alert_events(b.alert_path) == data.alerts);
  const auto reloaded = load_bundle(b.manifest_path.parent_path());
  CHECK(reloaded.windows == b.windows);
  CHECK(reloaded.manifest.stats == b.manifest.stats);
  CHECK(manifest_to_json(reloaded.manifest) == manifest_to_json(b.manifest));
}

TEST_CASE("ideal sensor alerts stay inside the window") {
  auto spec = small_spec();
  spec.snort_detect_prob = 1.0;
  spec.snort_false_alarm_rate = 0.0;
  const auto data = generate(spec);
  const auto w = ground_truth_windows(spec).at(0);
  REQUIRE_FALSE(data.alerts.empty());
  for (const auto& a : data.alerts) CHECK(w.contains(a.ts_us));
}

TEST_CASE("poll count equals duration over polling interval") {
  ScenarioSpec spec;
  spec.use_case = UseCase::UC3;
  spec.duration_s = 600;
  spec.polling_interval_s = 30;
  spec.n_masters = 1;
  spec.n_outstations = 1;
  spec.attack = false;
  const auto data = generate(spec);
  int reads = 0, responses = 0;
  for (const auto& p : data.packets) {
    if (!p.dnp3_bytes) continue;
    const auto rec = dnp3::extract_physical(dnp3::parse_link_frame(*p.dnp3_bytes));
    // retransmitted copies share a sequence number; count distinct segments
    reads += rec.function_code == dnp3::fc::kRead;
    responses += rec.function_code == dnp3::fc::kResponse;
  }
  const auto retrans = data.manifest.stats.injected_retransmissions;
  CHECK(reads + responses - retrans == 40);
  CHECK(data.manifest.stats.poll_exchanges == 20);
  std::int64_t distinct_reads = 0;
  const auto flags = ingest::annotate_retransmissions(data.packets);
  for (std::size_t i = 0; i < data.packets.size(); ++i) {
    if (!data.packets[i].dnp3_bytes || flags[i]) continue;
    const auto rec = dnp3::extract_physical(dnp3::parse_link_frame(*data.packets[i].dnp3_bytes));
    distinct_reads += rec.function_code == dnp3::fc::kRead;
  }
  CHECK(distinct_reads == 20);
}

TEST_CASE("ground truth windows") {
  ScenarioSpec spec;
  spec.attack = false;
  CHECK(ground_truth_windows(spec).empty());
  spec.attack = true;
  spec.attack_start_s = 100;
  spec.attack_end_s = 200;
  const auto w = ground_truth_windows(spec);
  REQUIRE(w.size() == 1);
  CHECK(w[0].start_us - kEpochUs == 100'000'000);
  CHECK(w[0].end_us - kEpochUs == 200'000'000);
  CHECK(w[0].kind == WindowKind::FCI);
  spec.use_case = UseCase::UC2;
  CHECK(ground_truth_windows(spec)[0].kind == WindowKind::FCI);
  spec.use_case = UseCase::UC3;
  CHECK(ground_truth_windows(spec)[0].kind == WindowKind::FDI_FCI);
  spec.use_case = UseCase::UC4;
  CHECK(ground_truth_windows(spec)[0].kind == WindowKind::FDI_FCI);
}

TEST_CASE("attacker MAC appears only inside the window") {
  for (auto uc : {UseCase::UC1, UseCase::UC2, UseCase::UC3, UseCase::UC4}) {
    auto spec = small_spec();
    spec.use_case = uc;
    const auto data = generate(spec);
    const auto w = ground_truth_windows(spec).at(0);
    int attacker_seen = 0;
    for (const auto& p : data.packets) {
      const bool attacker = p.eth_src == std::string(kAttackerMac);
      if (!w.contains(p.ts_us)) {
        CHECK_FALSE(attacker);
        // legitimate master MAC on every master-facing or master-sent frame
        const bool from_master = p.ip_src->starts_with("10.0.1.");
        const auto& master_side = from_master ? *p.eth_src : *p.eth_dst;
        CHECK(master_side.starts_with("02:00:00:00:01:"));
      }
      attacker_seen += attacker;
    }
    CHECK(attacker_seen > 0);
    CHECK(data.manifest.stats.injected_commands > 0);
  }
}

TEST_CASE("emitted DNP3 frames re-parse and re-serialize identically") {
  for (auto uc : {UseCase::UC1, UseCase::UC2, UseCase::UC3, UseCase::UC4}) {
    auto spec = small_spec();
    spec.use_case = uc;
    const auto data = generate(spec);
    std::map<int, int> fcs;
    for (const auto& p : data.packets) {
      if (!p.dnp3_bytes) continue;
      const auto frame = dnp3::parse_link_frame(*p.dnp3_bytes);
      CHECK(dnp3::serialize_link_frame(frame) == *p.dnp3_bytes);
      const auto dir = frame.from_master() ? dnp3::Direction::Request : dnp3::Direction::Response;
      const auto app = dnp3::parse_application(std::span(frame.user_data).subspan(1), dir);
      CHECK(dnp3::serialize_application(app) ==
            std::vector<std::uint8_t>(frame.user_data.begin() + 1, frame.user_data.end()));
      ++fcs[app.function_code];
    }
    CHECK(fcs[dnp3::fc::kDirectOperate] > 0);
  }
}

TEST_CASE("poll cadence stays within the manifest jitter bound") {
  const auto spec = small_spec();
  const auto data = generate(spec);
  const auto flags = ingest::annotate_retransmissions(data.packets);
  std::map<std::pair<std::string, std::string>, std::vector<TimestampUs>> reads;
  for (std::size_t i = 0; i < data.packets.size(); ++i) {
    const auto& p = data.packets[i];
    if (!p.dnp3_bytes || flags[i]) continue;
    if (dnp3::extract_physical(dnp3::parse_link_frame(*p.dnp3_bytes)).function_code != dnp3::fc::kRead) continue;
    reads[{*p.ip_src, *p.ip_dst}].push_back(p.ts_us);
  }
  REQUIRE(reads.size() == 6);
  const TimestampUs pi = 30'000'000;
  const TimestampUs bound = data.manifest.jitter_bound_us;
  CHECK(bound == 1'500'000);
  for (const auto& [key, ts] : reads) {
    CHECK(ts.size() == 30);
    for (std::size_t i = 1; i < ts.size(); ++i) {
      CHECK(std::llabs(ts[i] - ts[i - 1] - pi) <= 2 * bound);
    }
  }
}

TEST_CASE("retransmission rate matches the injected count") {
  ScenarioSpec spec;
  spec.attack = false;
  spec.n_masters = 3;
  spec.n_outstations = 3;
  spec.duration_s = 900;
  spec.retrans_prob = 0.2;
  const auto data = generate(spec);
  const auto flags = ingest::annotate_retransmissions(data.packets);
  std::int64_t flagged = 0, data_pkts = 0;
  for (std::size_t i = 0; i < data.packets.size(); ++i) {
    flagged += flags[i];
    data_pkts += data.packets[i].is_tcp_data();
  }
  REQUIRE(data_pkts >= 500);
  CHECK(flagged == data.manifest.stats.injected_retransmissions);
  const double frac = static_cast<double>(flagged) / static_cast<double>(data_pkts);
  CHECK(frac >= 0.1);
  CHECK(frac <= 0.3);
}

TEST_CASE("interception multiplies round-trip times") {
  ScenarioSpec spec;
  spec.n_masters = 1;
  spec.n_outstations = 1;
  spec.duration_s = 3600;
  spec.attack_start_s = 1000;
  spec.attack_end_s = 3000;
  spec.mitm_delay_factor = 3.0;
  spec.retrans_prob = 0.0;
  spec.mitm_retrans_prob = 0.0;
  const auto data = generate(spec);
  const auto rtt = ingest::annotate_rtt(data.packets);
  const auto w = ground_truth_windows(spec).at(0);
  std::vector<double> in, out;
  for (std::size_t i = 0; i < rtt.size(); ++i) {
    if (!rtt[i]) continue;
    (w.contains(data.packets[i].ts_us) ? in : out).push_back(*rtt[i]);
  }
  REQUIRE(in.size() > 20);
  REQUIRE(out.size() > 20);
  const double ratio = median(in) / median(out);
  CHECK(ratio == doctest::Approx(3.0).epsilon(0.2));
}

TEST_CASE("invalid specs and unwritable output") {
  ScenarioSpec spec;
  spec.duration_s = 0;
  CHECK_THROWS_AS(generate(spec), Error);
  spec = ScenarioSpec{};
  spec.attack_start_s = 500;
  spec.attack_end_s = 400;
  CHECK_THROWS_AS(generate(spec), Error);
  spec = ScenarioSpec{};
  spec.snort_detect_prob = 1.5;
  CHECK_THROWS_AS(generate(spec), Error);

  const auto blocker = temp_dir("blocker");
  fs::create_directories(blocker.parent_path());
  std::ofstream(blocker) << "file";
  try {
    generate_scenario(small_spec(), blocker / "sub");
    FAIL("wrote into a file path");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Io);
  }
}
