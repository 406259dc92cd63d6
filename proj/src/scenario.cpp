#include "cpfusion/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cpfusion/dnp3.hpp"
#include "cpfusion/rng.hpp"

namespace cpfusion::scenario {

namespace {

using ingest::AlertEvent;
using ingest::AlertType;
using ingest::FlowEvent;
using ingest::RawPacket;

constexpr TimestampUs kCommandOffsetUs = 500'000;  // injected command follows its poll
constexpr TimestampUs kExchangeGuardUs = 1'500'000;  // every exchange completes within this
constexpr std::uint8_t kMasterLinkCtrl = 0xC4;  // DIR | PRM | unconfirmed user data
constexpr std::uint8_t kOutstationLinkCtrl = 0x44;
constexpr std::uint8_t kIpFlagsDf = 0x40;
constexpr std::uint8_t kTcpPshAck = 0x18;
constexpr std::uint8_t kTcpAck = 0x10;

// Independent random streams, so changing one knob does not reshuffle the rest.
enum Stream : std::uint64_t { kTiming = 1, kValues, kLoss, kCommands, kAlerts, kLayout };

TimestampUs seconds_to_us(double s) { return static_cast<TimestampUs>(std::llround(s * 1e6)); }

struct Layout {
  int n_bi = 0;
  int n_ai32 = 0;
  int n_ai16 = 0;
  int n_ci = 2;
  std::vector<double> bi_state;
  std::vector<double> ai_base;  // ai32 then ai16
};

enum class EffectKind { SetBinary, ScaleAnalog };

struct Effect {
  TimestampUs t = 0;
  EffectKind kind = EffectKind::SetBinary;
  int index = 0;
  double value = 0.0;
};

struct Poll {
  int master = 0;
  int outstation = 0;
  TimestampUs t = 0;
};

enum class Phase { None, Fdi, Commands };

struct Tagged {
  RawPacket pkt;
  int conn = 0;
  bool from_master = false;
  bool intercepted = false;
  bool malicious_dnp3 = false;  // tampered or injected DNP3 content
};

struct ConnState {
  int master = 0;
  int outstation = 0;
  std::uint32_t master_seq = 0;
  std::uint32_t outstation_seq = 0;
  std::uint8_t master_tseq = 0;
  std::uint8_t outstation_tseq = 0;
  std::uint8_t app_seq = 0;
};

class Generator {
 public:
  explicit Generator(const ScenarioSpec& spec)
      : spec_(spec),
        windows_(ground_truth_windows(spec)),
        values_(mix_seed(spec.seed, kValues)),
        loss_(mix_seed(spec.seed, kLoss)),
        commands_(mix_seed(spec.seed, kCommands)) {}

  GeneratedData run() {
    build_layouts();
    build_polls();
    plan_commands();
    build_connections();
    for (const auto& poll : polls_) run_exchange(poll);

    std::stable_sort(out_.begin(), out_.end(),
                     [](const Tagged& a, const Tagged& b) { return a.pkt.ts_us < b.pkt.ts_us; });
    GeneratedData data;
    data.flows = build_flows();
    data.alerts = build_alerts();
    for (const auto& t : out_) {
      if (t.intercepted) ++stats_.intercepted_packets;
      data.packets.push_back(t.pkt);
    }
    data.manifest.spec = spec_;
    data.manifest.windows = windows_;
    data.manifest.jitter_bound_us = seconds_to_us(spec_.jitter_fraction * spec_.polling_interval_s);
    data.manifest.stats = stats_;
    return data;
  }

 private:
  const ScenarioSpec& spec_;
  std::vector<AttackWindow> windows_;
  Rng values_;
  Rng loss_;
  Rng commands_;
  std::vector<Layout> layouts_;
  std::vector<Poll> polls_;
  std::vector<std::vector<Effect>> effects_;  // per outstation, time ordered
  std::map<std::pair<int, TimestampUs>, Effect> planned_;  // (conn, poll t) -> command
  TimestampUs grid_start_ = 0;
  bool grid_active_ = false;
  std::vector<ConnState> conns_;
  std::vector<Tagged> out_;
  GenerationStats stats_;

  int conn_index(int master, int outstation) const { return master * spec_.n_outstations + outstation; }
  bool is_target(int outstation) const { return spec_.attack && outstation < spec_.n_targets; }

  TimestampUs at(double seconds) const { return kEpochUs + seconds_to_us(seconds); }

  void build_layouts() {
    Rng rng(mix_seed(spec_.seed, kLayout));
    for (int j = 0; j < spec_.n_outstations; ++j) {
      Layout l;
      l.n_bi = 4 + j % 4;
      l.n_ai32 = 3 + j % 3;
      l.n_ai16 = 2 + j % 2;
      for (int i = 0; i < l.n_bi; ++i) l.bi_state.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
      for (int i = 0; i < l.n_ai32; ++i) l.ai_base.push_back(std::round(rng.uniform(1000.0, 20000.0)));
      for (int i = 0; i < l.n_ai16; ++i) l.ai_base.push_back(std::round(rng.uniform(500.0, 8000.0)));
      layouts_.push_back(std::move(l));
    }
  }

  // Poll k of pair p sits at (k + phase_p) * PI + u * PI with |u| <= jitter.
  void build_polls() {
    Rng rng(mix_seed(spec_.seed, kTiming));
    const double pi = spec_.polling_interval_s;
    const auto per_pair = static_cast<int>(std::floor(spec_.duration_s / pi + 1e-9));
    const int pairs = spec_.n_masters * spec_.n_outstations;
    for (int m = 0; m < spec_.n_masters; ++m) {
      for (int o = 0; o < spec_.n_outstations; ++o) {
        const int p = conn_index(m, o);
        const double phase = 0.1 + 0.8 * (p + 0.5) / pairs;
        for (int k = 0; k < per_pair; ++k) {
          const double u = rng.uniform(-spec_.jitter_fraction, spec_.jitter_fraction);
          polls_.push_back({m, o, at((k + phase + u) * pi)});
        }
      }
    }
  }

  Phase phase_at(TimestampUs t) const {
    if (windows_.empty()) return Phase::None;
    const auto& w = windows_.front();
    if (!w.contains(t)) return Phase::None;
    const double frac = static_cast<double>(t - w.start_us) / static_cast<double>(w.end_us - w.start_us);
    switch (spec_.use_case) {
      case UseCase::UC1:
      case UseCase::UC2: return Phase::Commands;
      case UseCase::UC3: return frac < 0.5 ? Phase::Fdi : Phase::Commands;
      case UseCase::UC4:
        if (frac < 1.0 / 3.0) return Phase::Fdi;
        return frac < 2.0 / 3.0 ? Phase::Commands : Phase::Fdi;
    }
    return Phase::None;
  }

  // An exchange is intercepted only when it lies entirely inside the window,
  // so no packet outside the window ever carries the attacker MAC.
  bool intercepted(const Poll& poll) const {
    if (!is_target(poll.outstation) || windows_.empty()) return false;
    const auto& w = windows_.front();
    return poll.t >= w.start_us && poll.t + kExchangeGuardUs <= w.end_us;
  }

  // Commands are decided up front so the grid response (and the outstation
  // state) is known before any response is synthesized.
  void plan_commands() {
    effects_.assign(spec_.n_outstations, {});
    auto ordered = polls_;
    std::stable_sort(ordered.begin(), ordered.end(), [](const Poll& a, const Poll& b) { return a.t < b.t; });
    std::vector<std::vector<double>> bi_now(spec_.n_outstations);
    for (int j = 0; j < spec_.n_outstations; ++j) bi_now[j] = layouts_[j].bi_state;
    bool analog_next = false;
    for (const auto& poll : ordered) {
      if (!intercepted(poll) || phase_at(poll.t) != Phase::Commands) continue;
      const auto& layout = layouts_[poll.outstation];
      Effect e;
      e.t = poll.t + kCommandOffsetUs;
      if (spec_.use_case == UseCase::UC2 && analog_next) {
        e.kind = EffectKind::ScaleAnalog;
        e.index = static_cast<int>(commands_.below(static_cast<std::uint64_t>(layout.n_ai32)));
        e.value = commands_.uniform(0.3, 0.6);
      } else {
        e.kind = EffectKind::SetBinary;
        e.index = static_cast<int>(commands_.below(static_cast<std::uint64_t>(layout.n_bi)));
        e.value = 1.0 - bi_now[poll.outstation][e.index];
        bi_now[poll.outstation][e.index] = e.value;
      }
      analog_next = !analog_next;
      effects_[poll.outstation].push_back(e);
      planned_[{conn_index(poll.master, poll.outstation), poll.t}] = e;
      if (!grid_active_ || e.t < grid_start_) grid_start_ = e.t;
      grid_active_ = true;
    }
  }

  void build_connections() {
    Rng rng(mix_seed(spec_.seed, kTiming + 100));
    for (int m = 0; m < spec_.n_masters; ++m) {
      for (int o = 0; o < spec_.n_outstations; ++o) {
        ConnState c;
        c.master = m;
        c.outstation = o;
        c.master_seq = static_cast<std::uint32_t>(rng.next_u64());
        c.outstation_seq = static_cast<std::uint32_t>(rng.next_u64());
        conns_.push_back(c);
      }
    }
  }

  TimestampUs rtt_us(bool mitm) {
    const double ms = spec_.base_rtt_ms * loss_.uniform(0.8, 1.2) * (mitm ? spec_.mitm_delay_factor : 1.0);
    return std::clamp<TimestampUs>(static_cast<TimestampUs>(std::llround(ms * 1000.0)), 1, 40'000);
  }

  RawPacket tcp_packet(const ConnState& c, bool from_master, bool mitm, TimestampUs t) const {
    RawPacket p;
    p.ts_us = t;
    const auto mmac = master_mac(c.master);
    const auto omac = outstation_mac(c.outstation);
    p.eth_src = mitm ? std::string(kAttackerMac) : (from_master ? mmac : omac);
    p.eth_dst = from_master ? omac : mmac;
    p.ip_src = from_master ? master_ip(c.master) : outstation_ip(c.outstation);
    p.ip_dst = from_master ? outstation_ip(c.outstation) : master_ip(c.master);
    p.src_port = from_master ? master_port(c.outstation) : kOutstationPort;
    p.dst_port = from_master ? kOutstationPort : master_port(c.outstation);
    p.ip_flags = kIpFlagsDf;
    p.tcp_seq = from_master ? c.master_seq : c.outstation_seq;
    p.tcp_ack = from_master ? c.outstation_seq : c.master_seq;
    p.tcp_len = 0;
    p.tcp_flags = kTcpAck;
    p.ip_len = 40;
    p.frame_len = 54;
    p.frame_protocols = "eth:ethertype:ip:tcp";
    return p;
  }

  /// Emits a DNP3 data segment (and possibly its retransmission); returns the
  /// time the receiver sees it.
  TimestampUs send_data(int conn, bool from_master, bool mitm, bool malicious, TimestampUs t,
                        std::vector<std::uint8_t> bytes) {
    auto& c = conns_[conn];
    RawPacket p = tcp_packet(c, from_master, mitm, t);
    const auto len = static_cast<std::int64_t>(bytes.size());
    p.tcp_len = len;
    p.tcp_flags = kTcpPshAck;
    p.ip_len = 40 + len;
    p.frame_len = 14 + *p.ip_len;
    p.frame_protocols = "eth:ethertype:ip:tcp:dnp3";
    p.dnp3_bytes = std::move(bytes);
    out_.push_back({p, conn, from_master, mitm, malicious});
    ++stats_.data_segments;
    TimestampUs delivered = t;
    if (loss_.bernoulli(mitm ? spec_.mitm_retrans_prob : spec_.retrans_prob)) {
      delivered = t + seconds_to_us(spec_.rto_ms / 1000.0);
      RawPacket again = p;
      again.ts_us = delivered;
      out_.push_back({again, conn, from_master, mitm, malicious});
      ++stats_.injected_retransmissions;
      ++stats_.data_segments;
    }
    (from_master ? c.master_seq : c.outstation_seq) += static_cast<std::uint32_t>(len);
    return delivered;
  }

  void send_ack(int conn, bool from_master, bool mitm, TimestampUs t) {
    out_.push_back({tcp_packet(conns_[conn], from_master, mitm, t), conn, from_master, mitm, false});
  }

  std::vector<std::uint8_t> frame(int conn, bool from_master, const dnp3::AppFragment& app) {
    auto& c = conns_[conn];
    auto& tseq = from_master ? c.master_tseq : c.outstation_tseq;
    dnp3::TransportHeader th{true, true, tseq};
    tseq = static_cast<std::uint8_t>((tseq + 1) % 64);
    const std::uint16_t m = master_link_address(c.master);
    const std::uint16_t o = outstation_link_address(c.outstation);
    return from_master ? dnp3::encode_frame(kMasterLinkCtrl, o, m, th, app)
                       : dnp3::encode_frame(kOutstationLinkCtrl, m, o, th, app);
  }

  dnp3::AppFragment read_request(int outstation, std::uint8_t seq) const {
    const auto& l = layouts_[outstation];
    dnp3::AppFragment app;
    app.al_ctrl = static_cast<std::uint8_t>(0xC0 | (seq & 0x0F));
    app.function_code = dnp3::fc::kRead;
    const std::uint8_t bi_var = outstation % 2 == 1 ? 1 : 2;
    app.objects.push_back(dnp3::make_read_block(1, bi_var, 0, l.n_bi - 1));
    app.objects.push_back(dnp3::make_read_block(30, 1, 0, l.n_ai32 - 1));
    app.objects.push_back(dnp3::make_read_block(30, 2, l.n_ai32, l.n_ai32 + l.n_ai16 - 1));
    app.objects.push_back(dnp3::make_read_block(20, 1, 0, l.n_ci - 1));
    app.obj_count = static_cast<std::uint32_t>(l.n_bi + l.n_ai32 + l.n_ai16 + l.n_ci);
    return app;
  }

  /// Field values at time t, including earlier commands and the grid response.
  dnp3::AppFragment read_response(int outstation, std::uint8_t seq, TimestampUs t, double fdi_factor) {
    const auto& l = layouts_[outstation];
    std::vector<double> bi = l.bi_state;
    std::vector<double> ai_scale(l.ai_base.size(), 1.0);
    // Operators restore the field state once the attack ends.
    const bool restored = !windows_.empty() && t > windows_.front().end_us;
    for (const auto& e : effects_[outstation]) {
      if (e.t > t || restored) break;
      if (e.kind == EffectKind::SetBinary) bi[e.index] = e.value;
      else ai_scale[e.index] = e.value;
    }
    const bool grid = grid_active_ && t >= grid_start_ && !windows_.empty() && t <= windows_.front().end_us;

    dnp3::AppFragment app;
    app.al_ctrl = static_cast<std::uint8_t>(0xC0 | (seq & 0x0F));
    app.function_code = dnp3::fc::kResponse;
    app.direction = dnp3::Direction::Response;
    std::vector<dnp3::Point> bpts, a32, a16, cpts;
    for (double s : bi) bpts.push_back({0, s, 0x01, {}});
    for (std::size_t i = 0; i < l.ai_base.size(); ++i) {
      double v = l.ai_base[i] * (1.0 + 0.02 * values_.normal()) * ai_scale[i];
      if (grid) v *= spec_.grid_response_factor;
      v *= fdi_factor;
      const bool wide = i < static_cast<std::size_t>(l.n_ai32);
      v = std::clamp(std::round(v), wide ? -2.0e9 : -32768.0, wide ? 2.0e9 : 32767.0);
      (wide ? a32 : a16).push_back({0, v, 0x01, {}});
    }
    for (int i = 0; i < l.n_ci; ++i) cpts.push_back({0, static_cast<double>(values_.below(5)), 0x01, {}});
    app.objects.push_back(dnp3::make_range_block(1, outstation % 2 == 1 ? 1 : 2, 0, bpts));
    app.objects.push_back(dnp3::make_range_block(30, 1, 0, a32));
    app.objects.push_back(dnp3::make_range_block(30, 2, static_cast<std::uint32_t>(l.n_ai32), a16));
    app.objects.push_back(dnp3::make_range_block(20, 1, 0, cpts));
    app.obj_count = static_cast<std::uint32_t>(bi.size() + l.ai_base.size() + cpts.size());
    return app;
  }

  dnp3::AppFragment command(const Effect& e, std::uint8_t seq, int outstation, bool response) const {
    dnp3::AppFragment app;
    app.al_ctrl = static_cast<std::uint8_t>(0xC0 | (seq & 0x0F));
    app.function_code = response ? dnp3::fc::kResponse : dnp3::fc::kDirectOperate;
    app.direction = response ? dnp3::Direction::Response : dnp3::Direction::Request;
    dnp3::Point p;
    p.index = static_cast<std::uint32_t>(e.index);
    if (e.kind == EffectKind::SetBinary) {
      p.crob = dnp3::Crob{static_cast<std::uint8_t>(e.value != 0.0 ? 0x41 : 0x81), 1, 100, 0, 0};
      p.value = dnp3::crob_state(p.crob);
      app.objects.push_back(dnp3::make_indexed_block(12, 1, {p}));
    } else {
      p.value = std::round(std::min(32767.0, layouts_[outstation].ai_base[e.index] * e.value));
      app.objects.push_back(dnp3::make_indexed_block(41, 2, {p}));
    }
    app.obj_count = 1;
    return app;
  }

  void run_exchange(const Poll& poll) {
    const int conn = conn_index(poll.master, poll.outstation);
    const bool mitm = intercepted(poll);
    const Phase phase = mitm ? phase_at(poll.t) : Phase::None;
    auto& c = conns_[conn];
    ++stats_.poll_exchanges;

    const std::uint8_t seq = c.app_seq;
    c.app_seq = static_cast<std::uint8_t>((c.app_seq + 1) % 16);
    const auto t_req = send_data(conn, true, mitm, false, poll.t, frame(conn, true, read_request(poll.outstation, seq)));
    const TimestampUs t_resp0 = t_req + rtt_us(mitm);
    double fdi = 1.0;
    if (phase == Phase::Fdi) {
      fdi = values_.uniform(spec_.fdi_min_factor, spec_.fdi_max_factor);
      ++stats_.tampered_responses;
    }
    const auto resp = read_response(poll.outstation, seq, t_resp0, fdi);
    const auto t_resp = send_data(conn, false, mitm, phase == Phase::Fdi, t_resp0, frame(conn, false, resp));
    send_ack(conn, true, mitm, t_resp + rtt_us(mitm));

    const auto planned = planned_.find({conn, poll.t});
    if (planned == planned_.end()) return;
    // The attacker speaks for the master; its segments continue the master's
    // sequence space because it relays the hijacked connection.
    const Effect& e = planned->second;
    const std::uint8_t cseq = c.app_seq;
    c.app_seq = static_cast<std::uint8_t>((c.app_seq + 1) % 16);
    const auto t_cmd = send_data(conn, true, true, true, e.t, frame(conn, true, command(e, cseq, poll.outstation, false)));
    const auto t_echo = send_data(conn, false, true, true, t_cmd + rtt_us(true),
                                  frame(conn, false, command(e, cseq, poll.outstation, true)));
    send_ack(conn, true, true, t_echo + rtt_us(true));
    ++stats_.injected_commands;
  }

  // One flow event per connection per reporting period, like a periodic
  // flow exporter; the last event of each connection is final.
  std::vector<FlowEvent> build_flows() const {
    const TimestampUs period = seconds_to_us(spec_.polling_interval_s);
    struct Acc {
      TimestampUs start = 0, end = 0;
      std::int64_t source_packets = 0;
    };
    std::map<std::pair<int, TimestampUs>, Acc> buckets;
    std::vector<TimestampUs> conn_first(conns_.size(), -1);
    for (const auto& t : out_) {
      const TimestampUs bucket = (t.pkt.ts_us - kEpochUs) / period;
      auto [it, fresh] = buckets.try_emplace({t.conn, bucket}, Acc{t.pkt.ts_us, t.pkt.ts_us, 0});
      it->second.end = t.pkt.ts_us;
      if (t.from_master) ++it->second.source_packets;
      if (conn_first[t.conn] < 0) conn_first[t.conn] = t.pkt.ts_us;
    }
    std::vector<FlowEvent> flows;
    for (auto it = buckets.begin(); it != buckets.end(); ++it) {
      const int conn = it->first.first;
      const auto next = std::next(it);
      FlowEvent f;
      f.event_start_us = it->second.start;
      f.event_end_us = it->second.end;
      f.flow_id = fmt::format("{:016x}", mix_seed(spec_.seed, 1000 + static_cast<std::uint64_t>(conn)));
      f.flow_final = next == buckets.end() || next->first.first != conn;
      f.source_packets = it->second.source_packets;
      f.flow_duration_us = f.event_end_us - conn_first[conn];
      flows.push_back(std::move(f));
    }
    std::stable_sort(flows.begin(), flows.end(),
                     [](const FlowEvent& a, const FlowEvent& b) { return a.event_start_us < b.event_start_us; });
    return flows;
  }

  std::vector<AlertEvent> build_alerts() const {
    Rng rng(mix_seed(spec_.seed, kAlerts));
    std::vector<AlertEvent> alerts;
    for (const auto& t : out_) {
      if (t.intercepted) {
        if (!rng.bernoulli(spec_.snort_detect_prob)) continue;
        const auto type = t.malicious_dnp3 ? AlertType::Dnp3 : AlertType::ArpSpoof;
        alerts.push_back({t.pkt.ts_us, type, type == AlertType::Dnp3 ? 1111001 : 1111002});
      } else if (rng.bernoulli(spec_.snort_false_alarm_rate)) {
        const auto type = rng.bernoulli(0.5) ? AlertType::Other : AlertType::IcmpFlood;
        alerts.push_back({t.pkt.ts_us, type, type == AlertType::Other ? 1111004 : 1111003});
      }
    }
    return alerts;
  }
};

void write_lines(const std::filesystem::path& path, const auto& items, const auto& format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, fmt::format("cannot write {}", path.string()));
  for (const auto& item : items) out << format(item) << '\n';
  if (!out) throw Error(Errc::Io, fmt::format("write failed on {}", path.string()));
}

}  // namespace

std::string_view use_case_name(UseCase uc) noexcept {
  switch (uc) {
    case UseCase::UC1: return "UC1";
    case UseCase::UC2: return "UC2";
    case UseCase::UC3: return "UC3";
    case UseCase::UC4: return "UC4";
  }
  return "UC1";
}

std::optional<UseCase> parse_use_case(std::string_view name) noexcept {
  for (auto uc : {UseCase::UC1, UseCase::UC2, UseCase::UC3, UseCase::UC4}) {
    if (use_case_name(uc) == name) return uc;
  }
  return std::nullopt;
}

std::string_view window_kind_name(WindowKind kind) noexcept {
  switch (kind) {
    case WindowKind::FCI: return "FCI";
    case WindowKind::FDI: return "FDI";
    case WindowKind::FDI_FCI: return "FDI_FCI";
  }
  return "FCI";
}

std::optional<WindowKind> parse_window_kind(std::string_view name) noexcept {
  for (auto k : {WindowKind::FCI, WindowKind::FDI, WindowKind::FDI_FCI}) {
    if (window_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

void ScenarioSpec::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(Errc::InvalidArgument, what);
  };
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  require(duration_s > 0.0, "duration_s must be positive");
  require(polling_interval_s >= 2.0, "polling_interval_s must be at least 2 s");
  require(n_masters >= 1 && n_masters <= 200, "n_masters must be in [1, 200]");
  require(n_outstations >= 1 && n_outstations <= 200, "n_outstations must be in [1, 200]");
  require(n_targets >= 0 && n_targets <= n_outstations, "n_targets must be in [0, n_outstations]");
  require(!attack || (0.0 <= attack_start_s && attack_start_s < attack_end_s && attack_end_s <= duration_s),
          "attack window must satisfy 0 <= start < end <= duration");
  require(prob(snort_detect_prob) && prob(snort_false_alarm_rate) && prob(retrans_prob) &&
              prob(mitm_retrans_prob),
          "probabilities must lie in [0, 1]");
  require(mitm_delay_factor >= 1.0, "mitm_delay_factor must be >= 1");
  require(jitter_fraction >= 0.0 && jitter_fraction <= 0.05, "jitter_fraction must be in [0, 0.05]");
  require(base_rtt_ms > 0.0 && base_rtt_ms * mitm_delay_factor <= 40.0, "RTT must be in (0, 40] ms");
  require(rto_ms > 0.0 && rto_ms <= 200.0, "rto_ms must be in (0, 200]");
  require(fdi_min_factor > 0.0 && fdi_min_factor <= fdi_max_factor, "fdi factors must satisfy 0 < min <= max");
  require(grid_response_factor > 0.0, "grid_response_factor must be positive");
}

std::vector<AttackWindow> ground_truth_windows(const ScenarioSpec& spec) {
  if (!spec.attack) return {};
  const auto kind = (spec.use_case == UseCase::UC1 || spec.use_case == UseCase::UC2) ? WindowKind::FCI
                                                                                      : WindowKind::FDI_FCI;
  return {AttackWindow{kEpochUs + seconds_to_us(spec.attack_start_s), kEpochUs + seconds_to_us(spec.attack_end_s),
                       kind}};
}

GeneratedData generate(const ScenarioSpec& spec) {
  spec.validate();
  return Generator(spec).run();
}

ScenarioBundle generate_scenario(const ScenarioSpec& spec, const std::filesystem::path& out_dir) {
  auto data = generate(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::Io, fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));
  ScenarioBundle b;
  b.capture_path = out_dir / "capture.jsonl";
  b.flow_path = out_dir / "flows.jsonl";
  b.alert_path = out_dir / "alerts.jsonl";
  b.manifest_path = out_dir / "manifest.json";
  write_lines(b.capture_path, data.packets, ingest::format_capture_line);
  write_lines(b.flow_path, data.flows, ingest::format_flow_line);
  write_lines(b.alert_path, data.alerts, ingest::format_alert_line);
  write_lines(b.manifest_path, std::vector<std::string>{manifest_to_json(data.manifest)},
              [](const std::string& s) { return s; });
  b.windows = data.manifest.windows;
  b.manifest = std::move(data.manifest);
  return b;
}

ScenarioBundle load_bundle(const std::filesystem::path& dir) {
  ScenarioBundle b;
  b.capture_path = dir / "capture.jsonl";
  b.flow_path = dir / "flows.jsonl";
  b.alert_path = dir / "alerts.jsonl";
  b.manifest_path = dir / "manifest.json";
  std::ifstream in(b.manifest_path);
  if (!in) throw Error(Errc::Io, fmt::format("cannot open {}", b.manifest_path.string()));
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  b.manifest = manifest_from_json(text);
  b.windows = b.manifest.windows;
  return b;
}

std::string manifest_to_json(const Manifest& m) {
  using ordered_json = nlohmann::ordered_json;
  const auto& s = m.spec;
  ordered_json j;
  j["use_case"] = use_case_name(s.use_case);
  j["n_masters"] = s.n_masters;
  j["polling_interval_s"] = s.polling_interval_s;
  j["n_outstations"] = s.n_outstations;
  j["duration_s"] = s.duration_s;
  j["attack"] = s.attack;
  j["attack_start_s"] = s.attack_start_s;
  j["attack_end_s"] = s.attack_end_s;
  j["snort_detect_prob"] = s.snort_detect_prob;
  j["snort_false_alarm_rate"] = s.snort_false_alarm_rate;
  j["mitm_delay_factor"] = s.mitm_delay_factor;
  j["seed"] = s.seed;
  j["n_targets"] = s.n_targets;
  j["jitter_fraction"] = s.jitter_fraction;
  j["base_rtt_ms"] = s.base_rtt_ms;
  j["retrans_prob"] = s.retrans_prob;
  j["mitm_retrans_prob"] = s.mitm_retrans_prob;
  j["rto_ms"] = s.rto_ms;
  j["fdi_min_factor"] = s.fdi_min_factor;
  j["fdi_max_factor"] = s.fdi_max_factor;
  j["grid_response_factor"] = s.grid_response_factor;
  j["windows"] = ordered_json::array();
  for (const auto& w : m.windows) {
    j["windows"].push_back({{"start_us", w.start_us}, {"end_us", w.end_us}, {"kind", window_kind_name(w.kind)}});
  }
  j["jitter_bound_us"] = m.jitter_bound_us;
  j["stats"] = {{"poll_exchanges", m.stats.poll_exchanges},
                {"data_segments", m.stats.data_segments},
                {"injected_retransmissions", m.stats.injected_retransmissions},
                {"injected_commands", m.stats.injected_commands},
                {"tampered_responses", m.stats.tampered_responses},
                {"intercepted_packets", m.stats.intercepted_packets}};
  return j.dump(2);
}

Manifest manifest_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(Errc::ParseError, "manifest is not a JSON object");
  Manifest m;
  try {
    auto& s = m.spec;
    const auto uc = parse_use_case(j.at("use_case").get<std::string>());
    if (!uc) throw Error(Errc::ParseError, "manifest: unknown use_case");
    s.use_case = *uc;
    s.n_masters = j.at("n_masters").get<int>();
    s.polling_interval_s = j.at("polling_interval_s").get<double>();
    s.n_outstations = j.at("n_outstations").get<int>();
    s.duration_s = j.at("duration_s").get<double>();
    s.attack = j.at("attack").get<bool>();
    s.attack_start_s = j.at("attack_start_s").get<double>();
    s.attack_end_s = j.at("attack_end_s").get<double>();
    s.snort_detect_prob = j.at("snort_detect_prob").get<double>();
    s.snort_false_alarm_rate = j.at("snort_false_alarm_rate").get<double>();
    s.mitm_delay_factor = j.at("mitm_delay_factor").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.n_targets = j.at("n_targets").get<int>();
    s.jitter_fraction = j.at("jitter_fraction").get<double>();
    s.base_rtt_ms = j.at("base_rtt_ms").get<double>();
    s.retrans_prob = j.at("retrans_prob").get<double>();
    s.mitm_retrans_prob = j.at("mitm_retrans_prob").get<double>();
    s.rto_ms = j.at("rto_ms").get<double>();
    s.fdi_min_factor = j.at("fdi_min_factor").get<double>();
    s.fdi_max_factor = j.at("fdi_max_factor").get<double>();
    s.grid_response_factor = j.at("grid_response_factor").get<double>();
    for (const auto& w : j.at("windows")) {
      const auto kind = parse_window_kind(w.at("kind").get<std::string>());
      if (!kind) throw Error(Errc::ParseError, "manifest: unknown window kind");
      m.windows.push_back({w.at("start_us").get<TimestampUs>(), w.at("end_us").get<TimestampUs>(), *kind});
    }
    m.jitter_bound_us = j.at("jitter_bound_us").get<TimestampUs>();
    const auto& st = j.at("stats");
    m.stats.poll_exchanges = st.at("poll_exchanges").get<std::int64_t>();
    m.stats.data_segments = st.at("data_segments").get<std::int64_t>();
    m.stats.injected_retransmissions = st.at("injected_retransmissions").get<std::int64_t>();
    m.stats.injected_commands = st.at("injected_commands").get<std::int64_t>();
    m.stats.tampered_responses = st.at("tampered_responses").get<std::int64_t>();
    m.stats.intercepted_packets = st.at("intercepted_packets").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, fmt::format("manifest: {}", e.what()));
  }
  return m;
}

std::string master_mac(int master) { return fmt::format("02:00:00:00:01:{:02x}", master & 0xFF); }
std::string outstation_mac(int outstation) { return fmt::format("02:00:00:00:02:{:02x}", outstation & 0xFF); }
std::string master_ip(int master) { return fmt::format("10.0.1.{}", 10 + master); }
std::string outstation_ip(int outstation) { return fmt::format("10.0.2.{}", 10 + outstation); }
std::uint16_t master_port(int outstation) { return static_cast<std::uint16_t>(40000 + outstation); }
std::uint16_t master_link_address(int master) { return static_cast<std::uint16_t>(100 + master); }
std::uint16_t outstation_link_address(int outstation) { return static_cast<std::uint16_t>(1 + outstation); }

}  // namespace cpfusion::scenario
