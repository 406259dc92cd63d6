// cpfusion: command-line front end of the fusion pipeline.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data error,
// 4 numeric failure. Outputs are written to a temporary name and renamed,
// so a failed command leaves no partial file behind.

#include <CLI11.hpp>
#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cpfusion/cluster.hpp"
#include "cpfusion/common.hpp"
#include "cpfusion/featan.hpp"
#include "cpfusion/fusion.hpp"
#include "cpfusion/ingest.hpp"
#include "cpfusion/learn.hpp"
#include "cpfusion/manifold.hpp"
#include "cpfusion/pipeline.hpp"
#include "cpfusion/rng.hpp"
#include "cpfusion/scenario.hpp"

namespace fs = std::filesystem;
using namespace cpfusion;
using pipeline::PipelineConfig;

namespace {

// ------------------------------------------------------------------ helpers

[[noreturn]] void usage_error(const std::string& what) { throw Error(Errc::InvalidArgument, what); }

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.4f}", v);
}

std::string join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out + '\n';
}

void write_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error(Errc::Io, fmt::format("cannot write {}", path.string()));
    }
  }
  fs::rename(tmp, path);
}

// Builds a directory under a staging name, then swaps it in.
void write_dir_atomic(const fs::path& dir, const std::function<void(const fs::path&)>& fill) {
  const auto parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  fs::create_directories(parent);
  const auto staging = parent / ("." + dir.filename().string() + ".staging");
  fs::remove_all(staging);
  try {
    fill(staging);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  fs::remove_all(dir);
  fs::rename(staging, dir);
}

template <typename E>
E parse_or_fail(std::string_view text, std::optional<E> (*parse)(std::string_view) noexcept, std::string_view what) {
  const auto v = parse(text);
  if (!v) usage_error(fmt::format("unknown {} '{}'", what, text));
  return *v;
}

template <typename E>
std::vector<E> parse_list(const std::vector<std::string>& names, std::optional<E> (*parse)(std::string_view) noexcept,
                          std::string_view what) {
  std::vector<E> out;
  for (const auto& n : names) out.push_back(parse_or_fail(n, parse, what));
  return out;
}

std::pair<int, int> parse_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) usage_error(fmt::format("expected a range like 2..10, got '{}'", text));
  try {
    const int a = std::stoi(text.substr(0, dots));
    const int b = std::stoi(text.substr(dots + 2));
    if (a < 2 || b < a) usage_error(fmt::format("need 2 <= lo <= hi in '{}'", text));
    return {a, b};
  } catch (const std::logic_error&) {
    usage_error(fmt::format("expected a range like 2..10, got '{}'", text));
  }
}

std::pair<int, int> parse_ratio(const std::string& text) {
  int a = 0, b = 0;
  char colon = 0;
  std::istringstream in(text);
  if (!(in >> a >> colon >> b) || colon != ':' || a <= 0 || b <= 0 || !in.eof()) {
    usage_error(fmt::format("expected a ratio like 1:2, got '{}'", text));
  }
  return {a, b};
}

// "key=value" pairs; values are numbers.
learn::Hyperparams parse_params(const std::vector<std::string>& pairs) {
  learn::Hyperparams out;
  for (const auto& p : pairs) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) usage_error(fmt::format("expected key=value, got '{}'", p));
    try {
      out[p.substr(0, eq)] = std::stod(p.substr(eq + 1));
    } catch (const std::logic_error&) {
      usage_error(fmt::format("'{}' is not a number", p.substr(eq + 1)));
    }
  }
  return out;
}

// "key=v1,v2,..." per entry.
learn::Grid parse_grid(const std::vector<std::string>& entries) {
  learn::Grid out;
  for (const auto& e : entries) {
    const auto eq = e.find('=');
    if (eq == std::string::npos) usage_error(fmt::format("expected key=v1,v2, got '{}'", e));
    std::istringstream in(e.substr(eq + 1));
    std::string item;
    auto& values = out[e.substr(0, eq)];
    while (std::getline(in, item, ',')) {
      try {
        values.push_back(std::stod(item));
      } catch (const std::logic_error&) {
        usage_error(fmt::format("'{}' is not a number", item));
      }
    }
    if (values.empty()) usage_error(fmt::format("grid key '{}' has no values", e.substr(0, eq)));
  }
  return out;
}

std::vector<std::size_t> subsample(std::size_t n, std::size_t cap, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= cap) return idx;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ------------------------------------------------------------ common options

// Every subcommand takes --seed, --config and --out. Flags override the
// config file; the config file overrides the built-in defaults.
struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::string physical_mode;
  std::string scale;
  std::string label_mode;
  std::string features = "cyber_physical";
  bool drop_alerts = false;
};

void add_common(CLI::App* sub, Common& c, bool out_required = true) {
  sub->add_option("--seed", c.seed, "Seed of every random choice");
  sub->add_option("--config", c.config, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  auto* out = sub->add_option("--out", c.out, "Output path");
  if (out_required) out->required();
}

void add_fusion(CLI::App* sub, Common& c) {
  sub->add_option("--physical-mode", c.physical_mode, "impute|drop")->check(CLI::IsMember({"impute", "drop"}));
  sub->add_option("--scale", c.scale, "minmax|log_then_minmax|none")
      ->check(CLI::IsMember({"minmax", "log_then_minmax", "none"}));
  sub->add_option("--label-mode", c.label_mode, "attack_window|snort")
      ->check(CLI::IsMember({"attack_window", "snort"}));
}

void add_features(CLI::App* sub, Common& c) {
  sub->add_option("--features", c.features, "pure_cyber|pure_physical|cyber_physical")
      ->check(CLI::IsMember({"pure_cyber", "pure_physical", "cyber_physical"}));
  sub->add_flag("--drop-alerts", c.drop_alerts, "Leave out the two alert columns (labels derived from Snort)");
}

PipelineConfig base_config(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? pipeline::default_config() : pipeline::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.physical_mode.empty()) cfg.physical_mode = *fusion::parse_physical_mode(c.physical_mode);
  if (!c.scale.empty()) cfg.scale = *fusion::parse_scale_method(c.scale);
  if (!c.label_mode.empty()) {
    cfg.label_mode = c.label_mode == "snort" ? pipeline::LabelChoice::Snort : pipeline::LabelChoice::AttackWindow;
  }
  return cfg;
}

// A bundle directory or a fused CSV, encoded and scaled.
struct Input {
  std::vector<fusion::FusedRecord> table;
  fusion::FeatureMatrix x;  // restricted to the selected feature set
  std::vector<std::string> y;  // empty when the source has no labels
};

Input load_input(const fs::path& in, const PipelineConfig& cfg, const Common& c) {
  Input r;
  bool guard = c.drop_alerts;
  if (fs::is_directory(in)) {
    auto d = pipeline::prepare_dataset({in.filename().string(), std::nullopt, in}, cfg.physical_mode, cfg.scale);
    const bool snort = cfg.label_mode == pipeline::LabelChoice::Snort;
    guard = guard || snort;
    r.table = std::move(d.table);
    r.x = std::move(d.x);
    r.y = snort ? std::move(d.snort_labels) : std::move(d.window_labels);
  } else {
    auto csv = fusion::read_fused_csv(in);
    r.table = fusion::impute(std::move(csv.table));
    r.x = fusion::scale(fusion::encode(r.table), cfg.scale);
    r.y = std::move(csv.labels);
  }
  r.x = r.x.select_columns(pipeline::feature_columns(*pipeline::parse_feature_set(c.features), guard));
  return r;
}

void require_labels(const Input& in, std::string_view what) {
  if (in.y.empty()) throw Error(Errc::ColumnNotFound, fmt::format("{} needs a label column", what));
}

// Runs the pipeline with only the experiments the caller switches back on.
PipelineConfig only(PipelineConfig cfg, const std::vector<std::string>& bundles) {
  cfg.supervised = false;
  cfg.feature_selection = false;
  cfg.cluster.enabled = false;
  cfg.manifold.enabled = false;
  cfg.cotrain.enabled = false;
  if (!bundles.empty()) {
    cfg.scenarios.clear();
    for (const auto& b : bundles) cfg.scenarios.push_back({fs::path(b).filename().string(), std::nullopt, b});
  }
  return cfg;
}

// ------------------------------------------------------------ subcommands

struct GenerateOpts {
  std::string use_case = "UC1";
  std::optional<int> masters, outstations;
  std::optional<double> polling, duration, attack_start, attack_end, detect_prob, false_alarm;
  bool no_attack = false;
};

void cmd_generate(const Common& c, const GenerateOpts& g) {
  std::vector<std::pair<std::string, scenario::ScenarioSpec>> specs;
  if (!c.config.empty()) {
    for (const auto& s : pipeline::load_config(c.config).scenarios) {
      if (s.spec) specs.emplace_back(s.name, *s.spec);
    }
    if (specs.empty()) usage_error("the config lists no generated scenarios");
  } else {
    scenario::ScenarioSpec s;
    s.use_case = parse_or_fail(g.use_case, scenario::parse_use_case, "use case");
    specs.emplace_back(g.use_case, s);
  }
  for (auto& [name, s] : specs) {
    if (c.seed) s.seed = *c.seed;
    if (g.masters) s.n_masters = *g.masters;
    if (g.outstations) s.n_outstations = *g.outstations;
    if (g.polling) s.polling_interval_s = *g.polling;
    if (g.duration) s.duration_s = *g.duration;
    if (g.attack_start) s.attack_start_s = *g.attack_start;
    if (g.attack_end) s.attack_end_s = *g.attack_end;
    if (g.detect_prob) s.snort_detect_prob = *g.detect_prob;
    if (g.false_alarm) s.snort_false_alarm_rate = *g.false_alarm;
    if (g.no_attack) s.attack = false;
    s.validate();
  }
  write_dir_atomic(c.out, [&](const fs::path& dir) {
    if (specs.size() == 1 && c.config.empty()) {
      scenario::generate_scenario(specs[0].second, dir);
      return;
    }
    for (const auto& [name, s] : specs) scenario::generate_scenario(s, dir / name);
  });
  spdlog::info("generated {} scenario(s) into {}", specs.size(), c.out);
}

void cmd_ingest(const Common& c, const std::string& in) {
  const auto b = scenario::load_bundle(in);
  const auto pkts = ingest::load_capture(b.capture_path);
  const auto flows = ingest::load_flow_events(b.flow_path);
  const auto alerts = ingest::load_alert_events(b.alert_path);
  const auto dnp3 = std::count_if(pkts.begin(), pkts.end(), [](const auto& p) { return p.dnp3_bytes.has_value(); });
  std::string out = join({"source", "records", "dnp3_records", "first_us", "last_us"});
  auto span = [](const auto& v, auto ts) -> std::vector<std::string> {
    if (v.empty()) return {"", ""};
    return {std::to_string(ts(v.front())), std::to_string(ts(v.back()))};
  };
  auto row = [&](std::string name, const auto& v, std::string d, auto ts) {
    std::vector<std::string> r{std::move(name), std::to_string(v.size()), std::move(d)};
    for (auto& s : span(v, ts)) r.push_back(std::move(s));
    out += join(r);
  };
  row("capture", pkts, std::to_string(dnp3), [](const ingest::RawPacket& p) { return p.ts_us; });
  row("flows", flows, "", [](const ingest::FlowEvent& f) { return f.event_start_us; });
  row("alerts", alerts, "", [](const ingest::AlertEvent& a) { return a.ts_us; });
  write_atomic(c.out, out);
}

void cmd_fuse(const Common& c, const std::string& in, bool raw) {
  const auto cfg = base_config(c);
  const auto b = scenario::load_bundle(in);
  auto table = fusion::fuse_sources(ingest::load_capture(b.capture_path), ingest::load_flow_events(b.flow_path),
                                    ingest::load_alert_events(b.alert_path), cfg.physical_mode);
  if (!raw) table = fusion::impute(std::move(table));
  const auto mode =
      cfg.label_mode == pipeline::LabelChoice::Snort ? fusion::LabelMode::Snort : fusion::LabelMode::AttackWindow;
  const auto labels = fusion::assign_labels(table, mode, b.windows).labels;
  write_atomic(c.out, fusion::fused_csv(table, &labels));
  spdlog::info("fused {} rows into {}", table.size(), c.out);
}

void cmd_featan(const Common& c, const std::string& what, const std::string& in, double threshold, double cutoff) {
  const auto cfg = base_config(c);
  const auto data = load_input(in, cfg, c);
  const auto names = data.x.names();
  std::string out;
  if (what == "corr") {
    const auto m = featan::pearson_matrix(data.x);
    std::vector<std::string> head{"feature"};
    head.insert(head.end(), m.names.begin(), m.names.end());
    out = join(head);
    for (Eigen::Index i = 0; i < m.r.rows(); ++i) {
      std::vector<std::string> row{m.names[static_cast<std::size_t>(i)]};
      for (Eigen::Index j = 0; j < m.r.cols(); ++j) row.push_back(fmt::format("{:.6f}", m.r(i, j)));
      out += join(row);
    }
  } else if (what == "pca") {
    const auto p = featan::pca_fit_transform(data.x.values, threshold);
    std::vector<std::string> head{"component", "explained_ratio", "cumulative"};
    head.insert(head.end(), names.begin(), names.end());
    out = join(head);
    double cum = 0.0;
    for (std::size_t k = 0; k < p.model.k(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      cum += p.model.explained_ratio(kk);
      std::vector<std::string> row{std::to_string(k + 1), fmt::format("{:.6f}", p.model.explained_ratio(kk)),
                                   fmt::format("{:.6f}", cum)};
      for (Eigen::Index f = 0; f < p.model.components.rows(); ++f) {
        row.push_back(fmt::format("{:.6f}", p.model.components(f, kk)));
      }
      out += join(row);
    }
  } else {
    const auto scores = featan::shapiro_rank(data.x, cfg.seed);
    const auto chosen = featan::select_features(scores, cutoff);
    const std::set<std::size_t> picked(chosen.begin(), chosen.end());
    out = join({"feature", "w", "constant", "selected"});
    for (const auto& s : scores) {
      out += join({s.name, fmt::format("{:.6f}", s.w), s.constant ? "1" : "0", picked.count(s.column) ? "1" : "0"});
    }
  }
  write_atomic(c.out, out);
}

struct LearnOpts {
  std::string in;
  std::vector<std::string> algos{"DT"};
  std::vector<std::string> params;
  std::vector<std::string> grid;
  std::size_t folds = 5;
  std::optional<double> test_fraction;
  std::string model;
};

void cmd_learn(const Common& c, const std::string& what, const LearnOpts& o) {
  auto cfg = base_config(c);
  if (o.test_fraction) cfg.test_fraction = *o.test_fraction;
  const auto data = load_input(o.in, cfg, c);
  require_labels(data, "learn");
  const auto algos = parse_list(o.algos, learn::parse_algo, "classifier");
  const auto params = parse_params(o.params);
  const auto prf = [](const learn::Metrics& m) {
    return std::vector<std::string>{num(m.weighted_f1), num(m.weighted_recall), num(m.weighted_precision)};
  };

  if (what == "train") {
    if (algos.size() != 1) usage_error("learn train takes one --algo");
    const auto m = learn::train(learn::ClassifierSpec(algos[0], params, cfg.seed), data.x, data.y);
    write_atomic(c.out, learn::model_to_json(m));
  } else if (what == "eval") {
    std::string out = join({"classifier", "f1", "rec", "prec"});
    if (!o.model.empty()) {
      const auto m = learn::load_model(o.model);
      std::vector<std::string> row{std::string(learn::algo_name(m.algo))};
      for (auto& s : prf(learn::evaluate(data.y, learn::predict(m, data.x)))) row.push_back(s);
      out += join(row);
    } else {
      const auto split = learn::stratified_split(data.y, cfg.test_fraction, cfg.seed);
      const auto tr = data.x.select_rows(split.train);
      const auto te = data.x.select_rows(split.test);
      const auto ytr = learn::take(data.y, split.train);
      const auto yte = learn::take(data.y, split.test);
      for (auto a : algos) {
        const auto m = learn::train(learn::ClassifierSpec(a, params, cfg.seed), tr, ytr);
        std::vector<std::string> row{std::string(learn::algo_name(a))};
        for (auto& s : prf(learn::evaluate(yte, learn::predict(m, te)))) row.push_back(s);
        out += join(row);
      }
    }
    write_atomic(c.out, out);
  } else {
    if (algos.size() != 1) usage_error("learn grid takes one --algo");
    const auto grid = parse_grid(o.grid);
    if (grid.empty()) usage_error("learn grid needs at least one --grid key=v1,v2");
    const auto g = learn::grid_search(learn::ClassifierSpec(algos[0], params, cfg.seed), data.x, data.y, grid, o.folds);
    std::vector<std::string> head;
    for (const auto& [k, v] : grid) head.push_back(k);
    head.push_back("score");
    head.push_back("best");
    std::string out = join(head);
    for (const auto& p : g.points) {
      std::vector<std::string> row;
      for (const auto& [k, v] : grid) row.push_back(fmt::format("{}", p.params.at(k)));
      row.push_back(num(p.score));
      bool best = true;
      for (const auto& [k, v] : grid) best = best && p.params.at(k) == g.best.at(k);
      row.push_back(best ? "1" : "0");
      out += join(row);
    }
    write_atomic(c.out, out);
  }
}

void cmd_cluster(const Common& c, const std::string& in, const std::vector<std::string>& algo_names,
                 const std::string& range, std::size_t max_rows) {
  const auto cfg = base_config(c);
  const auto data = load_input(in, cfg, c);
  const auto algos = algo_names.empty() ? std::vector<cluster::Algo>(std::begin(cluster::kAllAlgos), std::end(cluster::kAllAlgos))
                                        : parse_list(algo_names, cluster::parse_algo, "clustering algorithm");
  const auto [lo, hi] = parse_range(range);
  std::vector<int> ks;
  for (int k = lo; k <= hi; ++k) ks.push_back(k);
  const auto idx = subsample(data.x.rows(), max_rows, cfg.seed);
  Matrix x(static_cast<Eigen::Index>(idx.size()), data.x.values.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = data.x.values.row(static_cast<Eigen::Index>(idx[i]));
  x = cluster::row_normalize(x);
  const auto truth = data.y.empty() ? std::vector<std::string>{} : learn::take(data.y, idx);

  std::string out = join({"algo", "k", "S", "CH", "DB", "AR"});
  for (auto a : algos) {
    const auto results = cluster::cluster_sweep(a, x, ks, cfg.seed);
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& r = results[i];
      const std::set<int> found(r.labels.begin(), r.labels.end());
      const double nan = std::nan("");
      cluster::Quality q{nan, nan, nan};
      if (found.size() >= 2) q = cluster::cluster_quality(x, r.labels);
      const double ar = truth.empty() ? nan : cluster::adjusted_rand(truth, r.labels);
      out += join({std::string(cluster::algo_name(a)), std::to_string(ks[i]), num(q.silhouette),
                   num(q.calinski_harabasz), num(q.davies_bouldin), num(ar)});
    }
  }
  write_atomic(c.out, out);
}

void cmd_embed(const Common& c, const std::string& in, const std::string& algo, int dim, std::size_t max_rows) {
  const auto cfg = base_config(c);
  const auto data = load_input(in, cfg, c);
  const auto a = parse_or_fail(algo, manifold::parse_algo, "embedding");
  const auto idx = subsample(data.x.rows(), max_rows, cfg.seed);
  const auto x = data.x.select_rows(idx).values;
  const auto e = manifold::embed(a, x, dim, cfg.seed);
  std::vector<std::string> head{"row"};
  for (int j = 0; j < dim; ++j) head.push_back(fmt::format("c{}", j + 1));
  if (!data.y.empty()) head.push_back("label");
  std::string out = join(head);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::vector<std::string> row{std::to_string(idx[i])};
    for (int j = 0; j < dim; ++j) row.push_back(fmt::format("{:.6f}", e.coords(static_cast<Eigen::Index>(i), j)));
    if (!data.y.empty()) row.push_back(data.y[idx[i]]);
    out += join(row);
  }
  write_atomic(c.out, out);
}

void write_table(const pipeline::Report& r, const std::string& name, const std::string& out) {
  const auto* t = r.find(name);
  if (t == nullptr) throw Error(Errc::ColumnNotFound, fmt::format("the report has no '{}' table", name));
  write_atomic(out, t->csv());
}

}  // namespace

int main(int argc, char** argv) {
  init_logging_from_env();
  CLI::App app{"Multi-source cyber-physical data fusion for DNP3 intrusion detection"};
  app.set_version_flag("--version", std::string(pipeline::kVersion));
  app.require_subcommand(1);

  Common c;
  std::vector<std::pair<CLI::App*, std::function<void()>>> actions;
  auto leaf = [&](CLI::App* parent, const std::string& name, const std::string& help) {
    auto* sub = parent->add_subcommand(name, help);
    return sub;
  };

  GenerateOpts g;
  auto* gen = leaf(&app, "generate", "Synthesize a scenario bundle");
  add_common(gen, c);
  gen->add_option("--use-case", g.use_case, "UC1..UC4");
  gen->add_option("--masters", g.masters);
  gen->add_option("--outstations", g.outstations);
  gen->add_option("--polling", g.polling, "Polling interval in seconds");
  gen->add_option("--duration", g.duration, "Seconds");
  gen->add_option("--attack-start", g.attack_start, "Seconds");
  gen->add_option("--attack-end", g.attack_end, "Seconds");
  gen->add_option("--snort-detect-prob", g.detect_prob);
  gen->add_option("--snort-false-alarm-rate", g.false_alarm);
  gen->add_flag("--no-attack", g.no_attack);
  actions.emplace_back(gen, [&] { cmd_generate(c, g); });

  std::string in;
  std::vector<std::string> ins;
  auto* ing = leaf(&app, "ingest", "Load a bundle and summarize its sources");
  add_common(ing, c);
  ing->add_option("--in", in, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  actions.emplace_back(ing, [&] { cmd_ingest(c, in); });

  bool raw = false;
  auto* fu = leaf(&app, "fuse", "Fuse a bundle into one labeled table (CSV)");
  add_common(fu, c);
  add_fusion(fu, c);
  fu->add_option("--in", in, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  fu->add_flag("--no-impute", raw, "Keep absent cells empty");
  actions.emplace_back(fu, [&] { cmd_fuse(c, in, raw); });

  double threshold = 0.95, cutoff = 0.7;
  auto* fa = leaf(&app, "featan", "Feature analysis");
  fa->require_subcommand(1);
  for (const char* what : {"corr", "pca", "shapiro"}) {
    auto* s = leaf(fa, what, std::string(what) == "corr" ? "Pearson matrix" : std::string(what) == "pca" ? "PCA components" : "Shapiro-Wilk ranking");
    add_common(s, c);
    add_fusion(s, c);
    add_features(s, c);
    s->add_option("--in", in, "Bundle directory or fused CSV")->required()->check(CLI::ExistingPath);
    if (std::string(what) == "pca") s->add_option("--threshold", threshold, "Explained variance to keep");
    if (std::string(what) == "shapiro") s->add_option("--cutoff", cutoff, "Selection cutoff on W");
    actions.emplace_back(s, [&, what] { cmd_featan(c, what, in, threshold, cutoff); });
  }

  LearnOpts lo;
  auto* le = leaf(&app, "learn", "Supervised classifiers");
  le->require_subcommand(1);
  for (const char* what : {"train", "eval", "grid"}) {
    auto* s = leaf(le, what, std::string(what) == "train" ? "Fit and save a model"
                             : std::string(what) == "eval" ? "Weighted F1, recall, precision"
                                                           : "Cross-validated grid search");
    add_common(s, c);
    add_fusion(s, c);
    add_features(s, c);
    s->add_option("--in", lo.in, "Bundle directory or fused CSV")->required()->check(CLI::ExistingPath);
    s->add_option("--algo", lo.algos, "SVC, LR, GNB, BNB, DT, RF, MLP, KNN");
    s->add_option("--param", lo.params, "key=value override");
    if (std::string(what) == "eval") {
      s->add_option("--test-fraction", lo.test_fraction);
      s->add_option("--model", lo.model, "Evaluate a saved model on every row")->check(CLI::ExistingFile);
    }
    if (std::string(what) == "grid") {
      s->add_option("--grid", lo.grid, "key=v1,v2,...")->required();
      s->add_option("--folds", lo.folds);
    }
    actions.emplace_back(s, [&, what] { cmd_learn(c, what, lo); });
  }

  std::vector<std::string> algos;
  std::string range = "2..10";
  std::size_t max_rows = 2000;
  auto* cl = leaf(&app, "cluster", "Clustering");
  cl->require_subcommand(1);
  auto* clr = leaf(cl, "run", "Validity indices over a k range");
  add_common(clr, c);
  add_fusion(clr, c);
  add_features(clr, c);
  clr->add_option("--in", in, "Bundle directory or fused CSV")->required()->check(CLI::ExistingPath);
  clr->add_option("--algo", algos, "kmeans, agglomerative, spectral, birch (default: all)");
  clr->add_option("--k-range", range, "lo..hi");
  clr->add_option("--max-rows", max_rows, "Seeded row sample");
  actions.emplace_back(clr, [&] { cmd_cluster(c, in, algos, range, max_rows); });

  int dim = 2;
  std::string algo;
  std::vector<std::string> models;
  auto* ma = leaf(&app, "manifold", "Manifold embeddings");
  ma->require_subcommand(1);
  auto* me = leaf(ma, "embed", "Embedding coordinates");
  add_common(me, c);
  add_fusion(me, c);
  add_features(me, c);
  me->add_option("--in", in, "Bundle directory or fused CSV")->required()->check(CLI::ExistingPath);
  me->add_option("--algo", algo, "lle, spectral, mds, isomap, tsne")->required();
  me->add_option("--dim", dim);
  me->add_option("--max-rows", max_rows, "Seeded row sample");
  actions.emplace_back(me, [&] { cmd_embed(c, in, algo, dim, std::min<std::size_t>(max_rows, 600)); });

  auto* mb = leaf(ma, "bench", "Classifier F1 on every embedding");
  add_common(mb, c);
  add_fusion(mb, c);
  mb->add_option("--in", ins, "Bundle directories (default: the config's scenarios)")->check(CLI::ExistingDirectory);
  mb->add_option("--algo", algos, "Embeddings (default: all)");
  mb->add_option("--model", models, "Classifiers (default: all but LR)");
  mb->add_option("--dim", dim);
  mb->add_option("--max-rows", max_rows, "Seeded row sample");
  actions.emplace_back(mb, [&] {
    auto cfg = only(base_config(c), ins);
    cfg.manifold.enabled = true;
    if (!algos.empty()) cfg.manifold.algos = parse_list(algos, manifold::parse_algo, "embedding");
    if (!models.empty()) cfg.manifold.models = parse_list(models, learn::parse_algo, "classifier");
    if (mb->count("--dim")) cfg.manifold.dim = dim;
    if (mb->count("--max-rows")) cfg.manifold.max_rows = max_rows;
    write_table(pipeline::run_pipeline(cfg), "manifold", c.out);
  });

  std::string ratio;
  std::optional<int> max_loops;
  auto* co = leaf(&app, "cotrain", "Co-training");
  co->require_subcommand(1);
  auto* cor = leaf(co, "run", "Supervised vs co-training per base classifier");
  add_common(cor, c);
  add_fusion(cor, c);
  cor->add_option("--in", ins, "Bundle directories (default: the config's scenarios)")->check(CLI::ExistingDirectory);
  cor->add_option("--base", algos, "Base classifiers (default: all but KNN)");
  cor->add_option("--ratio", ratio, "labeled:unlabeled, e.g. 1:2");
  cor->add_option("--max-loops", max_loops);
  actions.emplace_back(cor, [&] {
    auto cfg = only(base_config(c), ins);
    cfg.cotrain.enabled = true;
    if (!algos.empty()) cfg.cotrain.bases = parse_list(algos, learn::parse_algo, "classifier");
    if (!ratio.empty()) std::tie(cfg.cotrain.labeled_parts, cfg.cotrain.unlabeled_parts) = parse_ratio(ratio);
    if (max_loops) cfg.cotrain.max_loops = *max_loops;
    if (c.seed) cfg.cotrain.seeds = {*c.seed};
    write_table(pipeline::run_pipeline(cfg), "cotrain", c.out);
  });

  std::string what;
  auto* rep = leaf(&app, "report", "Inspect a report directory");
  add_common(rep, c, false);
  rep->add_option("--in", in, "Report directory")->required()->check(CLI::ExistingDirectory);
  rep->add_option("--compare", what, "labels|feature_sets|cotrain")
      ->check(CLI::IsMember({"labels", "feature_sets", "cotrain"}));
  actions.emplace_back(rep, [&] {
    if (what.empty()) {
      std::ifstream f(fs::path(in) / "summary.txt", std::ios::binary);
      if (!f) throw Error(Errc::Io, fmt::format("{} has no summary.txt", in));
      std::cout << f.rdbuf();
      return;
    }
    const auto t = pipeline::compare(pipeline::read_table_csv(fs::path(in) / (what + ".csv")), what);
    if (c.out.empty()) {
      std::cout << t.text();
    } else {
      write_atomic(c.out, t.csv());
    }
  });

  auto* run = leaf(&app, "run", "Run the whole pipeline and write a report directory");
  add_common(run, c);
  actions.emplace_back(run, [&] {
    const auto cfg = base_config(c);
    const auto r = pipeline::run_pipeline(cfg);
    pipeline::write_report(r, c.out);
    fmt::print("wrote {} tables to {} (config hash {})\n", r.tables.size(), c.out, r.config_hash);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  for (auto& [sub, fn] : actions) {
    if (!sub->parsed()) continue;
    std::string stage = sub->get_name();
    if (sub->get_parent() != &app) stage = sub->get_parent()->get_name() + " " + stage;
    try {
      fn();
      return 0;
    } catch (const Error& e) {
      fmt::print(stderr, "cpfusion {}: {}\n", stage, e.what());
      switch (e.category()) {
        case ErrorCategory::Config:
          return 2;
        case ErrorCategory::Data:
          return 3;
        case ErrorCategory::Numeric:
          return 4;
      }
    } catch (const std::exception& e) {
      fmt::print(stderr, "cpfusion {}: {}\n", stage, e.what());
      return 3;
    }
  }
  return 2;
}
