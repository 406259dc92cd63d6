// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned here.
//
// Exit status is 0 iff the set of failing criteria equals the set passed via
// --expect-red (empty by default). A criterion listed there still prints its
// FAIL line; an expected-red criterion that passes makes the run fail, so the
// list cannot go stale silently.

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cpfusion/cluster.hpp"
#include "cpfusion/cotrain.hpp"
#include "cpfusion/dnp3.hpp"
#include "cpfusion/featan.hpp"
#include "cpfusion/fusion.hpp"
#include "cpfusion/learn.hpp"
#include "cpfusion/manifold.hpp"
#include "cpfusion/pipeline.hpp"
#include "cpfusion/rng.hpp"
#include "cpfusion/scenario.hpp"

namespace fs = std::filesystem;
using namespace cpfusion;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// -------------------------------------------------------------- shared data

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / fmt::format("cpfusion_acceptance_{}", ::getpid());
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

const scenario::UseCase kUseCases[] = {scenario::UseCase::UC1, scenario::UseCase::UC2, scenario::UseCase::UC3,
                                       scenario::UseCase::UC4};

// The four use-case bundles, written to disk and read back through the
// bundle path. Snort detection 0.8 and false alarms 0.05 are the spec defaults.
const std::vector<pipeline::Dataset>& bundles() {
  static const std::vector<pipeline::Dataset> data = [] {
    std::vector<pipeline::Dataset> out;
    for (auto uc : kUseCases) {
      scenario::ScenarioSpec s;
      s.use_case = uc;
      s.n_masters = 2;
      s.seed = 11;
      const std::string name(scenario::use_case_name(uc));
      const auto dir = work_dir() / name;
      scenario::generate_scenario(s, dir);
      out.push_back(pipeline::prepare_dataset({name, std::nullopt, dir}, fusion::PhysicalMode::Drop,
                                              fusion::ScaleMethod::MinMax));
    }
    return out;
  }();
  return data;
}

double test_f1(const learn::ClassifierSpec& spec, const fusion::FeatureMatrix& x, const std::vector<std::string>& y,
               const learn::Split& split) {
  const auto m = learn::train(spec, x.select_rows(split.train), learn::take(y, split.train));
  return learn::evaluate(learn::take(y, split.test), learn::predict(m, x.select_rows(split.test))).weighted_f1;
}

// ----------------------------------------------------------- 1 merge oracle

double cell_num(const Cell& c) { return std::get<double>(*c); }

Outcome merge_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240101);
  std::int64_t mismatches = 0, flow_hits = 0, alert_hits = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 1 + rng.below(500);
    const std::size_t n_flows = rng.below(501);
    const std::size_t n_alerts = rng.below(501);
    const TimestampUs span = 1 + static_cast<TimestampUs>(rng.below(inst % 3 == 0 ? 400 : 100'000));
    std::vector<TimestampUs> t(n);
    for (auto& v : t) v = static_cast<TimestampUs>(rng.below(static_cast<std::uint64_t>(span)));
    std::sort(t.begin(), t.end());  // duplicates allowed

    std::vector<ingest::FlowEvent> flows(n_flows);
    for (auto& f : flows) {
      f.event_start_us = static_cast<TimestampUs>(rng.below(static_cast<std::uint64_t>(span + span / 5))) - span / 10;
      f.event_end_us = f.event_start_us + static_cast<TimestampUs>(rng.below(static_cast<std::uint64_t>(span / 4 + 2)));
      f.flow_final = rng.bernoulli(0.4);
      f.source_packets = static_cast<std::int64_t>(rng.below(50));
    }
    std::sort(flows.begin(), flows.end(),
              [](const auto& a, const auto& b) { return a.event_start_us < b.event_start_us; });
    std::vector<ingest::AlertEvent> alerts(n_alerts);
    for (auto& a : alerts) {
      a.ts_us = rng.bernoulli(0.3) ? t[rng.below(n)]
                                   : static_cast<TimestampUs>(rng.below(static_cast<std::uint64_t>(span + 20))) - 10;
      a.alert_type = static_cast<ingest::AlertType>(rng.below(4));
    }
    std::sort(alerts.begin(), alerts.end(), [](const auto& a, const auto& b) { return a.ts_us < b.ts_us; });

    std::vector<fusion::CyberRecord> cb(n);
    for (std::size_t i = 0; i < n; ++i) cb[i].ts_us = t[i];
    const auto merged = fusion::merge_alerts(fusion::merge_flow_features(cb, flows), alerts);

    for (std::size_t i = 0; i < n; ++i) {
      // flows: the three start/end/span conditions, the last record open-ended
      const TimestampUs lo = t[i];
      const TimestampUs hi = i + 1 < n ? t[i + 1] : std::numeric_limits<TimestampUs>::max();
      double cnt = 0, fin = 0, pk = 0;
      for (const auto& f : flows) {
        const TimestampUs s = f.event_start_us, e = f.event_end_us;
        if ((lo <= s && hi >= s) || (lo <= e && hi >= e) || (lo >= s && hi <= e)) {
          cnt += 1;
          fin += f.flow_final ? 1 : 0;
          pk += static_cast<double>(f.source_packets);
        }
      }
      const auto& r = merged[i];
      if (cnt == 0) {
        mismatches += r[Column::FlowCnt].has_value() || r[Column::FlowFinCnt].has_value() || r[Column::Packets].has_value();
      } else {
        ++flow_hits;
        mismatches += !r[Column::FlowCnt] || cell_num(r[Column::FlowCnt]) != cnt;
        mismatches += !r[Column::FlowFinCnt] || cell_num(r[Column::FlowFinCnt]) != fin;
        mismatches += !r[Column::Packets] || cell_num(r[Column::Packets]) != pk;
      }

      // alerts: t_i <= tau < t_{i+1}, highest priority type wins
      std::optional<ingest::AlertType> best;
      for (const auto& a : alerts) {
        if (lo <= a.ts_us && (i + 1 == n || a.ts_us < t[i + 1])) {
          if (!best || ingest::alert_priority(a.alert_type) > ingest::alert_priority(*best)) best = a.alert_type;
        }
      }
      if (!best) {
        mismatches += r[Column::SnortAlert].has_value() || r[Column::AlertType].has_value();
      } else {
        ++alert_hits;
        mismatches += !r[Column::SnortAlert] || cell_num(r[Column::SnortAlert]) != 1.0;
        mismatches += !r[Column::AlertType] ||
                      std::get<std::string>(*r[Column::AlertType]) != ingest::alert_type_name(*best);
      }
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0,
          fmt::format("100 instances, {} flow-bearing and {} alert-bearing records, {} mismatches, {:.1f} s (< 10 s)",
                      flow_hits, alert_hits, mismatches, secs)};
}

// -------------------------------------------------------- 2 parser round trip

Outcome parser_round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::vector<std::uint8_t>> frames;
  for (std::uint64_t seed = 1; frames.size() < 10'000; ++seed) {
    scenario::ScenarioSpec s;
    s.use_case = kUseCases[seed % 4];
    s.n_masters = 2;
    s.polling_interval_s = 5.0;
    s.seed = seed;
    for (auto& p : scenario::generate(s).packets) {
      if (p.dnp3_bytes && frames.size() < 10'000) frames.push_back(std::move(*p.dnp3_bytes));
    }
  }
  std::int64_t link_bad = 0, stack_bad = 0;
  for (const auto& w : frames) {
    const auto f = dnp3::parse_link_frame(w);
    link_bad += dnp3::serialize_link_frame(f) != w;
    // transport and application layers too: rebuild the frame from the parsed stack
    const auto th = dnp3::parse_transport(f.user_data.at(0));
    const std::span<const std::uint8_t> app_bytes(f.user_data.data() + 1, f.user_data.size() - 1);
    const auto app = dnp3::parse_application(app_bytes,
                                             f.from_master() ? dnp3::Direction::Request : dnp3::Direction::Response);
    std::vector<std::uint8_t> user{dnp3::serialize_transport(th)};
    const auto a = dnp3::serialize_application(app);
    user.insert(user.end(), a.begin(), a.end());
    stack_bad += dnp3::serialize_link_frame(dnp3::make_link_frame(f.ll_ctrl, f.ll_dest, f.ll_src, user)) != w;
  }

  Rng rng(77);
  std::vector<std::size_t> idx(frames.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(1000);
  std::int64_t flips = 0, accepted = 0, other = 0;
  for (auto i : idx) {
    auto w = frames[i];
    for (std::size_t bit = 0; bit < w.size() * 8; ++bit) {
      w[bit / 8] ^= static_cast<std::uint8_t>(1U << (bit % 8));
      ++flips;
      try {
        dnp3::parse_link_frame(w);
        ++accepted;
      } catch (const Error& e) {
        other += e.code() != Errc::CrcMismatch;
      }
      w[bit / 8] ^= static_cast<std::uint8_t>(1U << (bit % 8));
    }
  }
  const double secs = seconds_since(t0);
  return {link_bad == 0 && stack_bad == 0 && accepted == 0 && other == 0 && secs < 30.0,
          fmt::format("{} frames: {} link and {} full-stack round-trip mismatches; {} bit flips on 1000 frames: {} "
                      "accepted, {} not CrcMismatch; {:.1f} s (< 30 s)",
                      frames.size(), link_bad, stack_bad, flips, accepted, other, secs)};
}

// ----------------------------------------------------- 3 fusion-impact direction

Outcome fusion_impact() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::vector<std::string> parts;
  for (const auto& d : bundles()) {
    const auto split = learn::stratified_split(d.window_labels, 0.3, 1);
    const auto cyber = d.x.select_columns(pipeline::feature_columns(pipeline::FeatureSet::PureCyber, false));
    const auto cp = d.x.select_columns(pipeline::feature_columns(pipeline::FeatureSet::CyberPhysical, false));
    for (auto a : {learn::Algo::DT, learn::Algo::RF}) {
      const learn::ClassifierSpec spec(a, {}, 1);
      const double fc = test_f1(spec, cyber, d.window_labels, split);
      const double fp = test_f1(spec, cp, d.window_labels, split);
      ok = ok && fp - fc >= 0.05;
      parts.push_back(fmt::format("{} {} {:.3f}>{:.3f}", d.name, learn::algo_name(a), fp, fc));
    }
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 300.0,
          fmt::format("cyber-physical vs pure-cyber F1, margin >= 0.05: {}; {:.1f} s (< 300 s)", fmt::join(parts, ", "),
                      secs)};
}

// ------------------------------------------------------ 4 label-source direction

Outcome label_source() {
  bool ok = true;
  std::vector<std::string> parts;
  for (const auto& d : bundles()) {
    // the two alert columns are the Snort label itself, so both runs leave them out
    const auto x = d.x.select_columns(pipeline::feature_columns(pipeline::FeatureSet::CyberPhysical, true));
    const auto split = learn::stratified_split(d.window_labels, 0.3, 1);
    const learn::ClassifierSpec spec(learn::Algo::DT, {}, 1);
    const double fw = test_f1(spec, x, d.window_labels, split);
    const double fs = test_f1(spec, x, d.snort_labels, split);
    ok = ok && fw - fs >= 0.05;
    parts.push_back(fmt::format("{} {:.3f}>{:.3f}", d.name, fw, fs));
  }
  return {ok, fmt::format("DT attack-window vs Snort labels, margin >= 0.05: {}", fmt::join(parts, ", "))};
}

// ------------------------------------------------------- 5 co-training parity

Outcome cotrain_parity() {
  const auto& d = bundles().front();
  bool ok = true;
  std::vector<std::string> parts;
  for (auto a : {learn::Algo::DT, learn::Algo::RF, learn::Algo::LR}) {
    double worst = 0.0;
    std::vector<std::string> per_seed;
    for (std::uint64_t s = 1; s <= 5; ++s) {
      const learn::ClassifierSpec spec(a, {}, s);
      const auto tt = learn::stratified_split(d.window_labels, 0.3, s);
      const auto train_x = d.x.select_rows(tt.train);
      const auto train_y = learn::take(d.window_labels, tt.train);
      const auto lu = cotrain::labeled_unlabeled_split(train_y, 1, 2, s);
      const auto lab_x = train_x.select_rows(lu.train);
      const auto lab_y = learn::take(train_y, lu.train);
      const auto test_x = d.x.select_rows(tt.test);
      const auto test_y = learn::take(d.window_labels, tt.test);
      const auto m = cotrain::cotrain_fit(spec, lab_x, lab_y, train_x.select_rows(lu.test), cotrain::default_split(), 50);
      const double co = learn::evaluate(test_y, cotrain::cotrain_predict(m, test_x).labels).weighted_f1;
      const double sup = learn::evaluate(test_y, learn::predict(learn::train(spec, lab_x, lab_y), test_x)).weighted_f1;
      worst = std::max(worst, std::abs(co - sup));
      per_seed.push_back(fmt::format("{:.2f}/{:.2f}", co, sup));
    }
    ok = ok && worst <= 0.10;
    parts.push_back(fmt::format("{} max|d| {:.3f} [{}]", learn::algo_name(a), worst, fmt::join(per_seed, " ")));
  }
  return {ok, fmt::format("{} 1:2, co/supervised F1 per seed, |d| <= 0.10: {}", d.name, fmt::join(parts, "; "))};
}

// -------------------------------------------------------- 6 cluster-count claim

Outcome cluster_count() {
  bool ok = true;
  std::vector<std::string> parts;
  std::vector<int> ks;
  for (int k = 2; k <= 10; ++k) ks.push_back(k);
  for (const auto& d : bundles()) {
    // the bundle has to carry both alert kinds for the claim to be meaningful
    std::set<std::string> kinds;
    for (const auto& r : d.table) kinds.insert(std::get<std::string>(*r[Column::AlertType]));
    if (!kinds.count("DNP3") || !kinds.count("ARP_SPOOF")) {
      ok = false;
      parts.push_back(fmt::format("{} lacks DNP3/ARP alerts", d.name));
      continue;
    }
    const Matrix x = cluster::row_normalize(d.x.values);
    for (auto a : {cluster::Algo::KMeans, cluster::Algo::Agglomerative}) {
      const auto rs = cluster::cluster_sweep(a, x, ks, 1);
      std::size_t best = 0;
      std::vector<double> s(rs.size());
      for (std::size_t i = 0; i < rs.size(); ++i) {
        s[i] = cluster::silhouette(x, rs[i].labels);
        if (s[i] > s[best]) best = i;
      }
      ok = ok && (ks[best] == 2 || ks[best] == 3);
      parts.push_back(fmt::format("{} {} k={} (S={:.3f})", d.name, cluster::algo_name(a), ks[best], s[best]));
    }
  }
  return {ok, fmt::format("silhouette argmax over k=2..10 in {{2,3}}: {}", fmt::join(parts, ", "))};
}

// ------------------------------------------------------------ 7 metric oracles

Outcome metric_oracles() {
  Matrix x(4, 2);
  x << 0, 0, 0, 1, 10, 0, 10, 1;
  const std::vector<int> lab{0, 0, 1, 1};
  const auto q = cluster::cluster_quality(x, lab);
  // a = 1 and b = (10 + sqrt(101)) / 2 for every point
  const double s_ref = 1.0 - 2.0 / (10.0 + std::sqrt(101.0));
  // between-group dispersion 100 over k - 1 = 1, within 1 over n - k = 2
  const double ch_ref = 200.0;
  // scatter 0.5 per cluster, centroid distance 10
  const double db_ref = 0.1;
  const double ari_cross = cluster::adjusted_rand(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 1, 0, 1});
  const double ari_same = cluster::adjusted_rand(std::vector<int>{0, 0, 1, 1, 2, 3}, std::vector<int>{3, 3, 0, 0, 1, 2});
  const std::vector<double> series{1.0, 3.0};
  const auto rs = cluster::robustness_stats(series);
  const double tol = 1e-6;
  const bool ok = std::abs(q.silhouette - s_ref) <= tol && std::abs(q.calinski_harabasz - ch_ref) <= tol &&
                  std::abs(q.davies_bouldin - db_ref) <= tol && ari_cross == -0.5 && std::abs(ari_same - 1.0) <= tol &&
                  std::abs(rs.nvar - std::sqrt(2.0) / 2.0) <= tol;
  return {ok, fmt::format("S {:.9f} (ref {:.9f}), CH {:.6f} (200), DB {:.9f} (0.1), ARI cross {} (-0.5 exact), ARI "
                          "relabeled {:.6f} (1), NVar[1,3] {:.9f} (0.707106781); tol 1e-6",
                          q.silhouette, s_ref, q.calinski_harabasz, q.davies_bouldin, ari_cross, ari_same, rs.nvar)};
}

// ------------------------------------------------------- 8 numerical methods

Matrix random_matrix(Rng& rng, Eigen::Index n, Eigen::Index p) {
  Matrix m(n, p);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Outcome numerical_methods() {
  Rng rng(8);
  // SMACOF: stress never rises from one iteration to the next
  int smacof_bad = 0;
  double worst_rise = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const Eigen::Index n = 20 + static_cast<Eigen::Index>(rng.below(30));
    const Matrix xs = random_matrix(rng, n, 5);
    Matrix dist(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) dist(i, j) = (xs.row(i) - xs.row(j)).norm();
    const auto r = manifold::smacof(dist, random_matrix(rng, n, 2), 300, 0.0);
    for (std::size_t i = 1; i < r.trace.size(); ++i) {
      const double rise = r.trace[i] - r.trace[i - 1];
      worst_rise = std::max(worst_rise, rise);
      // rounding slack far below any real increase
      if (rise > 1e-12 * r.trace[i - 1]) ++smacof_bad;
    }
  }

  // PCA: orthonormal components and the retained-variance error bound
  double ortho = 0.0;
  int pca_bad = 0;
  for (double thr : {0.5, 0.8, 0.95, 0.99}) {
    const Matrix mix = random_matrix(rng, 8, 8);
    const Matrix xp = random_matrix(rng, 300, 8) * mix;
    const auto p = featan::pca_fit_transform(xp, thr);
    const Matrix& c = p.model.components;
    ortho = std::max(ortho, (c.transpose() * c - Matrix::Identity(c.cols(), c.cols())).cwiseAbs().maxCoeff());
    const Matrix rec = p.model.inverse_transform(p.projected);
    const double err = (xp - rec).squaredNorm();
    const double total = (xp.rowwise() - xp.colwise().mean()).squaredNorm();
    if (err > (1.0 - thr) * total * (1.0 + 1e-9)) ++pca_bad;
  }

  // LLE: constrained weights sum to one per row
  double lle_dev = 0.0;
  for (int inst = 0; inst < 5; ++inst) {
    const Matrix w = manifold::lle_weights(random_matrix(rng, 120, 6), 10, 1e-3);
    lle_dev = std::max(lle_dev, (w.rowwise().sum().array() - 1.0).abs().maxCoeff());
  }

  // t-SNE: symmetric joint P, conditional perplexities on target
  double asym = 0.0, perp_dev = 0.0;
  for (double perp : {5.0, 30.0}) {
    const auto a = manifold::tsne_affinities(random_matrix(rng, 150, 5), perp);
    asym = std::max(asym, (a.p - a.p.transpose()).cwiseAbs().maxCoeff());
    perp_dev = std::max(perp_dev, ((a.row_perplexity.array() - perp).abs() / perp).maxCoeff());
  }

  const bool ok = smacof_bad == 0 && ortho <= 1e-8 && pca_bad == 0 && lle_dev <= 1e-9 && asym <= 1e-12 &&
                  perp_dev <= 0.01;
  return {ok, fmt::format("SMACOF rises {} (worst {:.1e}) on 20 runs; PCA |CtC-I| {:.1e} (<= 1e-8), bound violations {}; "
                          "LLE |rowsum-1| {:.1e} (<= 1e-9); t-SNE |P-Pt| {:.1e}, perplexity rel. dev. {:.1e} (<= 1e-2)",
                          smacof_bad, worst_rise, ortho, pca_bad, lle_dev, asym, perp_dev)};
}

// ----------------------------------------------------------- 9 determinism

std::map<std::string, std::string> read_dir(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[e.path().filename().string()] = ss.str();
  }
  return out;
}

Outcome determinism() {
  const auto cfg = pipeline::config_from_json(R"({
    "seed": 9,
    "scenarios": [
      {"name": "a", "spec": {"use_case": "UC1", "duration_s": 900, "attack_start_s": 300, "attack_end_s": 700, "seed": 4}},
      {"name": "b", "spec": {"use_case": "UC4", "duration_s": 900, "attack_start_s": 300, "attack_end_s": 700, "seed": 5}}],
    "models": ["DT", "RF", "GNB", {"algo": "KNN", "grid": {"k": [3, 5]}}],
    "cluster": {"k_max": 5, "max_rows": 300},
    "manifold": {"algos": ["mds", "isomap", "tsne"], "max_rows": 150, "models": ["DT", "KNN"]},
    "cotrain": {"bases": ["DT", "GNB"], "max_loops": 5, "seeds": [1, 2]}
  })");
  const auto d1 = work_dir() / "report1";
  const auto d2 = work_dir() / "report2";
  pipeline::write_report(pipeline::run_pipeline(cfg), d1);
  pipeline::write_report(pipeline::run_pipeline(cfg), d2);
  const auto a = read_dir(d1), b = read_dir(d2);
  std::size_t csvs = 0, differing = 0;
  for (const auto& [name, text] : a) {
    if (name.ends_with(".csv")) ++csvs;
    if (!b.count(name) || b.at(name) != text) ++differing;
  }
  const bool ok = a.size() == b.size() && differing == 0 && csvs >= 10;
  return {ok, fmt::format("two runs of a fixed config: {} files ({} CSV), {} differing", a.size(), csvs, differing)};
}

// --------------------------------------------------------- 10 classifier sanity

fusion::FeatureMatrix named(Matrix m) {
  fusion::FeatureMatrix x;
  for (Eigen::Index c = 0; c < m.cols(); ++c) x.columns.push_back({fmt::format("f{}", c), ColumnKind::Numeric, {}});
  x.values = std::move(m);
  return x;
}

// Two Gaussian classes `gap` apart along every one of 4 axes, unit noise.
std::pair<Matrix, std::vector<std::string>> blobs(Rng& rng, int n, double gap) {
  Matrix x(n, 4);
  std::vector<std::string> y;
  for (int i = 0; i < n; ++i) {
    const bool att = i % 2 == 0;
    y.emplace_back(att ? "attacked" : "normal");
    for (int c = 0; c < 4; ++c) x(i, c) = (att ? gap : 0.0) + rng.normal();
  }
  return {x, y};
}

Outcome classifier_sanity() {
  Rng rng(10);
  auto [raw, y] = blobs(rng, 600, 6.0);
  // min-max to [0, 1] as the pipeline does (BNB binarizes at 0.5)
  const Matrix lo = raw.colwise().minCoeff(), hi = raw.colwise().maxCoeff();
  Matrix scaled = raw;
  for (Eigen::Index c = 0; c < raw.cols(); ++c) scaled.col(c) = (raw.col(c).array() - lo(0, c)) / (hi(0, c) - lo(0, c));
  const auto x = named(scaled);
  const auto split = learn::stratified_split(y, 0.3, 1);
  bool ok = true;
  std::vector<std::string> parts;
  for (auto a : learn::kAllAlgos) {
    const double f1 = test_f1(learn::ClassifierSpec(a, {}, 1), x, y, split);
    ok = ok && f1 >= 0.95;
    parts.push_back(fmt::format("{} {:.3f}", learn::algo_name(a), f1));
  }

  // overlapping classes so the trees are not trivial, then strictly increasing maps per column
  auto [hard, yh] = blobs(rng, 400, 1.0);
  Matrix bent = hard;
  for (Eigen::Index c = 0; c < bent.cols(); ++c) {
    if (c % 2 == 0) {
      bent.col(c) = hard.col(c).array().exp();
    } else {
      bent.col(c) = hard.col(c).array().cube() + 3.0 * hard.col(c).array();
    }
  }
  const auto hs = learn::stratified_split(yh, 0.3, 2);
  int changed = 0;
  for (auto a : {learn::Algo::DT, learn::Algo::RF}) {
    const learn::ClassifierSpec spec(a, {}, 3);
    const auto p1 = learn::predict(learn::train(spec, named(hard).select_rows(hs.train), learn::take(yh, hs.train)),
                                   named(hard).select_rows(hs.test));
    const auto p2 = learn::predict(learn::train(spec, named(bent).select_rows(hs.train), learn::take(yh, hs.train)),
                                   named(bent).select_rows(hs.test));
    for (std::size_t i = 0; i < p1.size(); ++i) changed += p1[i] != p2[i];
  }
  ok = ok && changed == 0;
  return {ok, fmt::format("blob F1 >= 0.95: {}; DT/RF predictions changed by monotone transforms: {}",
                          fmt::join(parts, ", "), changed)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> expect_red, only;
  app.add_option("--expect-red", expect_red, "Criteria known to fail; the run passes only if exactly these fail");
  app.add_option("--only", only, "Run a subset");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"merge oracle", merge_oracle},
      {"parser round trip", parser_round_trip},
      {"fusion impact", fusion_impact},
      {"label source", label_source},
      {"co-training parity", cotrain_parity},
      {"cluster count", cluster_count},
      {"metric oracles", metric_oracles},
      {"numerical methods", numerical_methods},
      {"determinism", determinism},
      {"classifier sanity", classifier_sanity},
  };

  std::set<int> failed;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("error: {}", e.what())};
    }
    if (!o.pass) failed.insert(id);
    fmt::print("criterion {:>2} {} {}: {} [{:.1f} s]\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail,
               seconds_since(t0));
    std::fflush(stdout);
  }
  std::error_code ec;
  fs::remove_all(work_dir(), ec);

  std::set<int> expected;
  for (int id : expect_red) {
    if (only.empty() || std::find(only.begin(), only.end(), id) != only.end()) expected.insert(id);
  }
  fmt::print("failing: {{{}}}; expected red: {{{}}}\n", fmt::join(failed, ","), fmt::join(expected, ","));
  return failed == expected ? 0 : 1;
}
