#include "cpfusion/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cpfusion/cotrain.hpp"
#include "cpfusion/featan.hpp"
#include "cpfusion/ingest.hpp"
#include "cpfusion/rng.hpp"

namespace cpfusion::pipeline {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

// ------------------------------------------------------------ config parsing

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
  throw Error(Errc::ConfigError, fmt::format("{}: {}", where, what));
}

// Reads the keys of one JSON object and rejects the ones nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) config_error(where_, "expected an object");
  }

  const json* find(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (const json* v = find(key)) out = as<T>(*v, path(key));
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) config_error(where_, fmt::format("unknown key '{}'", key));
    }
  }

  template <typename T>
  static T as(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) config_error(where, "expected true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) config_error(where, "expected a string");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) config_error(where, "expected an integer");
      if (std::is_unsigned_v<T> && v.is_number_integer() && v.get<std::int64_t>() < 0 && !v.is_number_unsigned()) {
        config_error(where, "expected a non-negative integer");
      }
    } else {
      if (!v.is_number()) config_error(where, "expected a number");
    }
    return v.get<T>();
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename E>
E parse_enum(const json& v, const std::string& where, std::optional<E> (*parse)(std::string_view) noexcept) {
  const auto text = Reader::as<std::string>(v, where);
  const auto e = parse(text);
  if (!e) config_error(where, fmt::format("unknown value '{}'", text));
  return *e;
}

template <typename E>
std::vector<E> parse_enum_list(const json& v, const std::string& where,
                               std::optional<E> (*parse)(std::string_view) noexcept) {
  if (!v.is_array()) config_error(where, "expected a list");
  std::vector<E> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(parse_enum(v[i], fmt::format("{}[{}]", where, i), parse));
  return out;
}

std::optional<LabelChoice> parse_label_choice(std::string_view name) noexcept {
  if (name == "attack_window") return LabelChoice::AttackWindow;
  if (name == "snort") return LabelChoice::Snort;
  if (name == "both") return LabelChoice::Both;
  return std::nullopt;
}

std::string_view label_choice_name(LabelChoice c) noexcept {
  switch (c) {
    case LabelChoice::AttackWindow: return "attack_window";
    case LabelChoice::Snort: return "snort";
    case LabelChoice::Both: return "both";
  }
  return "both";
}

scenario::ScenarioSpec parse_spec(const json& j, const std::string& where) {
  scenario::ScenarioSpec s;
  Reader r(j, where);
  if (const json* v = r.find("use_case")) s.use_case = parse_enum(*v, r.path("use_case"), scenario::parse_use_case);
  r.get("n_masters", s.n_masters);
  r.get("polling_interval_s", s.polling_interval_s);
  r.get("n_outstations", s.n_outstations);
  r.get("duration_s", s.duration_s);
  r.get("attack", s.attack);
  r.get("attack_start_s", s.attack_start_s);
  r.get("attack_end_s", s.attack_end_s);
  r.get("snort_detect_prob", s.snort_detect_prob);
  r.get("snort_false_alarm_rate", s.snort_false_alarm_rate);
  r.get("mitm_delay_factor", s.mitm_delay_factor);
  r.get("seed", s.seed);
  r.get("n_targets", s.n_targets);
  r.get("jitter_fraction", s.jitter_fraction);
  r.get("base_rtt_ms", s.base_rtt_ms);
  r.get("retrans_prob", s.retrans_prob);
  r.get("mitm_retrans_prob", s.mitm_retrans_prob);
  r.get("rto_ms", s.rto_ms);
  r.get("fdi_min_factor", s.fdi_min_factor);
  r.get("fdi_max_factor", s.fdi_max_factor);
  r.get("grid_response_factor", s.grid_response_factor);
  r.finish();
  try {
    s.validate();
  } catch (const Error& e) {
    config_error(where, e.what());
  }
  return s;
}

ordered_json spec_json(const scenario::ScenarioSpec& s) {
  // the manifest codec already lists every spec field in a fixed order
  scenario::Manifest m;
  m.spec = s;
  auto j = ordered_json::parse(scenario::manifest_to_json(m));
  j.erase("windows");
  j.erase("jitter_bound_us");
  j.erase("stats");
  return j;
}

learn::Hyperparams parse_params(const json& v, const std::string& where) {
  if (!v.is_object()) config_error(where, "expected an object of numbers");
  learn::Hyperparams p;
  for (const auto& [key, value] : v.items()) p[key] = Reader::as<double>(value, where + "." + key);
  return p;
}

ModelEntry parse_model(const json& v, const std::string& where) {
  ModelEntry m;
  if (v.is_string()) {
    m.algo = parse_enum(v, where, learn::parse_algo);
  } else {
    Reader r(v, where);
    const json* algo = r.find("algo");
    if (!algo) config_error(where, "missing 'algo'");
    m.algo = parse_enum(*algo, r.path("algo"), learn::parse_algo);
    if (const json* p = r.find("params")) m.params = parse_params(*p, r.path("params"));
    if (const json* g = r.find("grid")) {
      if (!g->is_object()) config_error(r.path("grid"), "expected an object of lists");
      for (const auto& [key, values] : g->items()) {
        const auto at = r.path("grid") + "." + key;
        if (!values.is_array() || values.empty()) config_error(at, "expected a non-empty list");
        for (const auto& value : values) m.grid[key].push_back(Reader::as<double>(value, at));
      }
    }
    r.finish();
  }
  try {
    learn::ClassifierSpec check(m.algo, m.params);
    for (const auto& [key, values] : m.grid) {
      for (double value : values) learn::ClassifierSpec point(m.algo, {{key, value}});
    }
  } catch (const Error& e) {
    config_error(where, e.what());
  }
  return m;
}

std::vector<std::uint64_t> parse_seeds(const json& v, const std::string& where) {
  if (!v.is_array()) config_error(where, "expected a list of seeds");
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(Reader::as<std::uint64_t>(v[i], fmt::format("{}[{}]", where, i)));
  return out;
}

std::vector<learn::Algo> all_classifiers() { return {std::begin(learn::kAllAlgos), std::end(learn::kAllAlgos)}; }

std::vector<ModelEntry> resolved_models(const PipelineConfig& cfg) {
  if (!cfg.models.empty()) return cfg.models;
  std::vector<ModelEntry> out;
  for (auto a : all_classifiers()) out.push_back({a, {}, {}});
  return out;
}

// ---------------------------------------------------------------- execution

// Runs every task, at most hardware_concurrency at a time, and rethrows the
// error of the earliest failing task.
void run_all(std::vector<std::function<void()>>& tasks) {
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min<std::size_t>(tasks.size(), std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <typename F>
auto staged(std::string_view stage, std::string_view scope, F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), fmt::format("stage {} ({}): {}", stage, scope, e.what()), e.detail());
  }
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.4f}", v);
}

std::vector<std::string> prf(const learn::Metrics& m) {
  return {num(m.weighted_f1), num(m.weighted_recall), num(m.weighted_precision)};
}

void append(std::vector<std::string>& row, const std::vector<std::string>& more) {
  row.insert(row.end(), more.begin(), more.end());
}

std::string params_text(const learn::Hyperparams& p) {
  if (p.empty()) return "default";
  std::string out;
  for (const auto& [k, v] : p) out += fmt::format("{}{}={}", out.empty() ? "" : ";", k, format_number(v));
  return out;
}

learn::Metrics fit_eval(const learn::ClassifierSpec& spec, const fusion::FeatureMatrix& x,
                        const std::vector<std::string>& y, const learn::Split& split) {
  const auto model = learn::train(spec, x.select_rows(split.train), learn::take(y, split.train));
  return learn::evaluate(learn::take(y, split.test), learn::predict(model, x.select_rows(split.test)));
}

learn::Metrics fit_eval(const learn::ClassifierSpec& spec, const Matrix& train, const std::vector<std::string>& ytr,
                        const Matrix& test, const std::vector<std::string>& yte) {
  return learn::evaluate(yte, learn::predict(learn::train(spec, train, ytr), test));
}

Matrix rows_of(const Matrix& x, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

struct Labeling {
  const std::vector<std::string>* y;
  bool guard;  // labels come from Snort, so the alert columns must go
};

Labeling primary_labels(const Dataset& d, LabelChoice choice) {
  if (choice == LabelChoice::Snort) return {&d.snort_labels, true};
  return {&d.window_labels, false};
}

// Seeded subsample of at most `cap` row indices, ascending.
std::vector<std::size_t> subsample(std::size_t n, std::size_t cap, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= cap) return idx;
  Rng rng(mix_seed(seed, 0x5b));
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Normal, DNP3-alert and ARP-alert rows: the structure clustering should find.
std::vector<std::string> alert_structure(const std::vector<fusion::FusedRecord>& table) {
  std::vector<std::string> out;
  out.reserve(table.size());
  for (const auto& r : table) {
    const auto& cell = r[Column::AlertType];
    std::string type = cell && std::holds_alternative<std::string>(*cell) ? std::get<std::string>(*cell) : "";
    out.push_back(type == "DNP3" || type == "ARP_SPOOF" ? type : "normal");
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

std::string bundle_digest(const std::filesystem::path& dir) {
  std::uint64_t h = fnv1a64("");
  for (const char* f : {"capture.jsonl", "flows.jsonl", "alerts.jsonl", "manifest.json"}) {
    std::ifstream in(dir / f, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    h = fnv1a64(ss.str(), fnv1a64(f, h));
  }
  return fmt::format("{:016x}", h);
}

}  // namespace

// ------------------------------------------------------------------- config

std::string_view feature_set_name(FeatureSet set) noexcept {
  switch (set) {
    case FeatureSet::PureCyber: return "pure_cyber";
    case FeatureSet::PurePhysical: return "pure_physical";
    case FeatureSet::CyberPhysical: return "cyber_physical";
  }
  return "cyber_physical";
}

std::optional<FeatureSet> parse_feature_set(std::string_view name) noexcept {
  for (auto s : {FeatureSet::PureCyber, FeatureSet::PurePhysical, FeatureSet::CyberPhysical}) {
    if (feature_set_name(s) == name) return s;
  }
  return std::nullopt;
}

PipelineConfig default_config() {
  PipelineConfig c;
  for (auto uc : {scenario::UseCase::UC1, scenario::UseCase::UC2, scenario::UseCase::UC3, scenario::UseCase::UC4}) {
    scenario::ScenarioSpec s;
    s.use_case = uc;
    s.n_masters = 2;
    s.seed = 11;
    c.scenarios.push_back({std::string(scenario::use_case_name(uc)), s, {}});
  }
  return c;
}

PipelineConfig config_from_json(std::string_view text, const std::filesystem::path& base_dir) {
  const auto j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ConfigError, "config is not valid JSON");
  PipelineConfig c = default_config();
  Reader r(j, "config");
  r.get("seed", c.seed);
  r.get("supervised", c.supervised);

  if (const json* v = r.find("scenarios")) {
    if (!v->is_array() || v->empty()) config_error("config.scenarios", "expected a non-empty list");
    c.scenarios.clear();
    std::set<std::string> names;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const auto where = fmt::format("config.scenarios[{}]", i);
      Reader s((*v)[i], where);
      ScenarioSource src;
      s.get("name", src.name);
      const json* spec = s.find("spec");
      const json* bundle = s.find("bundle");
      if ((spec == nullptr) == (bundle == nullptr)) config_error(where, "give exactly one of 'spec' and 'bundle'");
      if (spec) {
        src.spec = parse_spec(*spec, where + ".spec");
        if (src.name.empty()) src.name = std::string(scenario::use_case_name(src.spec->use_case));
      } else {
        src.bundle = Reader::as<std::string>(*bundle, where + ".bundle");
        if (src.bundle.is_relative() && !base_dir.empty()) src.bundle = base_dir / src.bundle;
        if (!std::filesystem::is_directory(src.bundle)) {
          config_error(where, fmt::format("bundle directory '{}' does not exist", src.bundle.string()));
        }
        if (src.name.empty()) src.name = src.bundle.filename().string();
      }
      s.finish();
      if (!names.insert(src.name).second) config_error(where, fmt::format("duplicate scenario name '{}'", src.name));
      c.scenarios.push_back(std::move(src));
    }
  }

  if (const json* v = r.find("fusion")) {
    Reader f(*v, "config.fusion");
    if (const json* x = f.find("physical_mode")) c.physical_mode = parse_enum(*x, f.path("physical_mode"), fusion::parse_physical_mode);
    if (const json* x = f.find("scale")) c.scale = parse_enum(*x, f.path("scale"), fusion::parse_scale_method);
    if (const json* x = f.find("label_mode")) c.label_mode = parse_enum(*x, f.path("label_mode"), parse_label_choice);
    f.finish();
  }
  r.get("test_fraction", c.test_fraction);
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) config_error("config.test_fraction", "must lie in (0, 1)");

  if (const json* v = r.find("analysis")) {
    Reader a(*v, "config.analysis");
    a.get("pca_threshold", c.pca_threshold);
    a.get("shapiro_cutoff", c.shapiro_cutoff);
    a.get("feature_selection", c.feature_selection);
    a.finish();
    if (!(c.pca_threshold > 0.0 && c.pca_threshold <= 1.0)) config_error("config.analysis.pca_threshold", "must lie in (0, 1]");
  }

  if (const json* v = r.find("models")) {
    if (!v->is_array() || v->empty()) config_error("config.models", "expected a non-empty list");
    for (std::size_t i = 0; i < v->size(); ++i) c.models.push_back(parse_model((*v)[i], fmt::format("config.models[{}]", i)));
  }
  r.get("grid_folds", c.grid_folds);
  if (c.grid_folds < 2) config_error("config.grid_folds", "needs at least 2 folds");
  if (const json* v = r.find("feature_sets")) c.feature_sets = parse_enum_list(*v, "config.feature_sets", parse_feature_set);

  if (const json* v = r.find("cluster")) {
    Reader k(*v, "config.cluster");
    k.get("enabled", c.cluster.enabled);
    if (const json* x = k.find("algos")) c.cluster.algos = parse_enum_list(*x, k.path("algos"), cluster::parse_algo);
    k.get("k_min", c.cluster.k_min);
    k.get("k_max", c.cluster.k_max);
    k.get("max_rows", c.cluster.max_rows);
    k.get("robustness_k", c.cluster.robustness_k);
    k.finish();
    if (c.cluster.k_min < 2 || c.cluster.k_max < c.cluster.k_min) config_error("config.cluster", "need 2 <= k_min <= k_max");
  }

  if (const json* v = r.find("manifold")) {
    Reader m(*v, "config.manifold");
    m.get("enabled", c.manifold.enabled);
    if (const json* x = m.find("algos")) c.manifold.algos = parse_enum_list(*x, m.path("algos"), manifold::parse_algo);
    m.get("dim", c.manifold.dim);
    m.get("max_rows", c.manifold.max_rows);
    if (const json* x = m.find("models")) c.manifold.models = parse_enum_list(*x, m.path("models"), learn::parse_algo);
    m.finish();
    if (c.manifold.dim < 1) config_error("config.manifold.dim", "must be positive");
  }

  if (const json* v = r.find("cotrain")) {
    Reader t(*v, "config.cotrain");
    t.get("enabled", c.cotrain.enabled);
    if (const json* x = t.find("bases")) c.cotrain.bases = parse_enum_list(*x, t.path("bases"), learn::parse_algo);
    if (const json* x = t.find("ratio")) {
      const auto text = Reader::as<std::string>(*x, t.path("ratio"));
      int a = 0, b = 0;
      char colon = 0;
      std::istringstream in(text);
      if (!(in >> a >> colon >> b) || colon != ':' || a <= 0 || b <= 0 || !in.eof()) {
        config_error(t.path("ratio"), fmt::format("expected 'labeled:unlabeled', got '{}'", text));
      }
      c.cotrain.labeled_parts = a;
      c.cotrain.unlabeled_parts = b;
    }
    t.get("max_loops", c.cotrain.max_loops);
    if (const json* x = t.find("cyber_columns")) {
      if (!x->is_array()) config_error(t.path("cyber_columns"), "expected a list of column names");
      for (const auto& n : *x) {
        const auto name = Reader::as<std::string>(n, t.path("cyber_columns"));
        if (!column_by_name(name)) config_error(t.path("cyber_columns"), fmt::format("unknown column '{}'", name));
        c.cotrain.cyber_columns.push_back(name);
      }
    }
    if (const json* x = t.find("seeds")) c.cotrain.seeds = parse_seeds(*x, t.path("seeds"));
    t.finish();
    if (c.cotrain.max_loops < 0) config_error("config.cotrain.max_loops", "must be non-negative");
  }
  r.finish();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ConfigError, fmt::format("cannot read config {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), path.parent_path());
}

std::string config_to_json(const PipelineConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["supervised"] = c.supervised;
  j["scenarios"] = ordered_json::array();
  for (const auto& s : c.scenarios) {
    ordered_json e;
    e["name"] = s.name;
    if (s.spec) {
      e["spec"] = spec_json(*s.spec);
    } else {
      e["bundle"] = s.bundle.string();
    }
    j["scenarios"].push_back(e);
  }
  j["fusion"] = {{"physical_mode", fusion::physical_mode_name(c.physical_mode)},
                 {"scale", fusion::scale_method_name(c.scale)},
                 {"label_mode", label_choice_name(c.label_mode)}};
  j["test_fraction"] = c.test_fraction;
  j["analysis"] = {{"pca_threshold", c.pca_threshold},
                   {"shapiro_cutoff", c.shapiro_cutoff},
                   {"feature_selection", c.feature_selection}};
  j["models"] = ordered_json::array();
  for (const auto& m : resolved_models(c)) {
    ordered_json g = ordered_json::object();
    for (const auto& [k, v] : m.grid) g[k] = v;
    ordered_json p = ordered_json::object();
    for (const auto& [k, v] : m.params) p[k] = v;
    j["models"].push_back({{"algo", learn::algo_name(m.algo)}, {"params", p}, {"grid", g}});
  }
  j["grid_folds"] = c.grid_folds;
  j["feature_sets"] = ordered_json::array();
  for (auto s : c.feature_sets) j["feature_sets"].push_back(feature_set_name(s));
  j["cluster"] = {{"enabled", c.cluster.enabled}, {"algos", ordered_json::array()}, {"k_min", c.cluster.k_min},
                  {"k_max", c.cluster.k_max}, {"max_rows", c.cluster.max_rows}, {"robustness_k", c.cluster.robustness_k}};
  for (auto a : c.cluster.algos) j["cluster"]["algos"].push_back(cluster::algo_name(a));
  j["manifold"] = {{"enabled", c.manifold.enabled}, {"algos", ordered_json::array()}, {"dim", c.manifold.dim},
                   {"max_rows", c.manifold.max_rows}, {"models", ordered_json::array()}};
  for (auto a : c.manifold.algos) j["manifold"]["algos"].push_back(manifold::algo_name(a));
  for (auto a : c.manifold.models) j["manifold"]["models"].push_back(learn::algo_name(a));
  j["cotrain"] = {{"enabled", c.cotrain.enabled},
                  {"bases", ordered_json::array()},
                  {"ratio", fmt::format("{}:{}", c.cotrain.labeled_parts, c.cotrain.unlabeled_parts)},
                  {"max_loops", c.cotrain.max_loops},
                  {"cyber_columns", c.cotrain.cyber_columns},
                  {"seeds", c.cotrain.seeds}};
  for (auto a : c.cotrain.bases) j["cotrain"]["bases"].push_back(learn::algo_name(a));
  return j.dump(2);
}

std::string config_hash(const PipelineConfig& c) {
  // bundle contents can change every number, so they are part of the hash
  std::uint64_t h = fnv1a64(config_to_json(c));
  for (const auto& s : c.scenarios) {
    if (!s.spec) h = fnv1a64(bundle_digest(s.bundle), h);
  }
  return fmt::format("{:016x}", h);
}

// ----------------------------------------------------------------- datasets

Dataset prepare_dataset(const ScenarioSource& source, fusion::PhysicalMode mode, fusion::ScaleMethod scale) {
  Dataset d;
  d.name = source.name;
  std::vector<ingest::RawPacket> packets;
  std::vector<ingest::FlowEvent> flows;
  std::vector<ingest::AlertEvent> alerts;
  std::vector<scenario::AttackWindow> windows;
  if (source.spec) {
    auto g = staged("generate", source.name, [&] { return scenario::generate(*source.spec); });
    packets = std::move(g.packets);
    flows = std::move(g.flows);
    alerts = std::move(g.alerts);
    windows = g.manifest.windows;
    d.spec = *source.spec;
  } else {
    staged("ingest", source.name, [&] {
      const auto b = scenario::load_bundle(source.bundle);
      packets = ingest::load_capture(b.capture_path);
      flows = ingest::load_flow_events(b.flow_path);
      alerts = ingest::load_alert_events(b.alert_path);
      windows = b.windows;
      d.spec = b.manifest.spec;
      return 0;
    });
  }
  staged("fuse", source.name, [&] {
    d.table = fusion::impute(fusion::fuse_sources(packets, flows, alerts, mode));
    d.x = fusion::scale(fusion::encode(d.table), scale);
    d.window_labels = fusion::assign_labels(d.table, fusion::LabelMode::AttackWindow, windows).labels;
    d.snort_labels = fusion::assign_labels(d.table, fusion::LabelMode::Snort, std::nullopt).labels;
    return 0;
  });
  return d;
}

std::vector<std::size_t> feature_columns(FeatureSet set, bool snort_guard) {
  std::vector<std::size_t> out;
  const std::size_t lo = set == FeatureSet::PurePhysical ? kNumCyberColumns : 0;
  const std::size_t hi = set == FeatureSet::PureCyber ? kNumCyberColumns : kNumColumns;
  for (std::size_t i = lo; i < hi; ++i) {
    if (snort_guard && (i == index_of(Column::SnortAlert) || i == index_of(Column::AlertType))) continue;
    out.push_back(i);
  }
  return out;
}

// -------------------------------------------------------------------- report

std::string Table::csv() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv_field(cells[i]);
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

std::string Table::text() const {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::string out = title + "\n";
  auto line = [&](const std::vector<std::string>& cells) {
    std::string l;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) l += "  ";
      l += cells[c];
      if (c + 1 < cells.size()) l.append(width[c] - cells[c].size(), ' ');
    }
    out += l + "\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

const Table* Report::find(std::string_view name) const {
  for (const auto& t : tables)
    if (t.name == name) return &t;
  return nullptr;
}

std::string Report::summary() const {
  std::string out;
  for (const auto& t : tables) out += t.text() + "\n";
  return out + "provenance\n" + provenance + "\n";
}

Report run_pipeline(const PipelineConfig& cfg) {
  if (cfg.scenarios.empty()) throw Error(Errc::ConfigError, "no scenarios configured");
  const auto models = resolved_models(cfg);
  const std::uint64_t seed = cfg.seed;
  const auto cotrain_seeds = cfg.cotrain.seeds.empty() ? std::vector<std::uint64_t>{seed} : cfg.cotrain.seeds;

  // fusion per scenario
  std::vector<Dataset> data(cfg.scenarios.size());
  {
    std::vector<std::function<void()>> tasks;
    for (std::size_t i = 0; i < data.size(); ++i) {
      tasks.emplace_back([&, i] { data[i] = prepare_dataset(cfg.scenarios[i], cfg.physical_mode, cfg.scale); });
    }
    run_all(tasks);
  }

  Report report;
  report.config_hash = config_hash(cfg);
  std::vector<std::function<void()>> tasks;
  // Every task owns one slot of rows; tables concatenate slots in task order.
  auto slots_for = [](std::size_t n) { return std::vector<std::vector<std::vector<std::string>>>(n); };

  // --- label source comparison
  const bool paired = cfg.supervised && cfg.label_mode == LabelChoice::Both;
  auto label_slots = slots_for(paired ? data.size() * models.size() : 0);
  if (paired) {
    for (std::size_t d = 0; d < data.size(); ++d) {
      for (std::size_t m = 0; m < models.size(); ++m) {
        tasks.emplace_back([&, d, m] {
          const auto& ds = data[d];
          staged("labels", ds.name, [&] {
            // both sources see the same rows and the same alert-free features
            const auto x = ds.x.select_columns(feature_columns(FeatureSet::CyberPhysical, true));
            const auto split = learn::stratified_split(ds.window_labels, cfg.test_fraction, seed);
            const learn::ClassifierSpec spec(models[m].algo, models[m].params, seed);
            std::vector<std::string> row{ds.name, std::string(learn::algo_name(models[m].algo))};
            append(row, prf(fit_eval(spec, x, ds.snort_labels, split)));
            append(row, prf(fit_eval(spec, x, ds.window_labels, split)));
            label_slots[d * models.size() + m].push_back(std::move(row));
            return 0;
          });
        });
      }
    }
  }

  // --- per-scenario classifier comparison, with grid search where configured
  auto clf_slots = slots_for(cfg.supervised ? data.size() * models.size() : 0);
  for (std::size_t d = 0; d < (cfg.supervised ? data.size() : 0); ++d) {
    for (std::size_t m = 0; m < models.size(); ++m) {
      tasks.emplace_back([&, d, m] {
        const auto& ds = data[d];
        staged("learn", ds.name, [&] {
          const auto lab = primary_labels(ds, cfg.label_mode);
          const auto x = ds.x.select_columns(feature_columns(FeatureSet::CyberPhysical, lab.guard));
          const auto split = learn::stratified_split(*lab.y, cfg.test_fraction, seed);
          const auto& entry = models[m];
          learn::Hyperparams params = entry.params;
          if (!entry.grid.empty()) {
            const auto g = learn::grid_search(learn::ClassifierSpec(entry.algo, entry.params, seed),
                                              x.select_rows(split.train), learn::take(*lab.y, split.train), entry.grid,
                                              cfg.grid_folds);
            for (const auto& [k, v] : g.best) params[k] = v;
          }
          std::vector<std::string> row{ds.name,
                                       std::string(scenario::use_case_name(ds.spec.use_case)),
                                       std::to_string(ds.spec.n_masters),
                                       format_number(ds.spec.polling_interval_s),
                                       std::string(learn::algo_name(entry.algo)),
                                       params_text(params)};
          append(row, prf(fit_eval(learn::ClassifierSpec(entry.algo, params, seed), x, *lab.y, split)));
          clf_slots[d * models.size() + m].push_back(std::move(row));
          return 0;
        });
      });
    }
  }

  // --- pure cyber / pure physical / cyber-physical
  auto fs_slots = slots_for(cfg.supervised ? data.size() * models.size() : 0);
  for (std::size_t d = 0; d < (cfg.supervised ? data.size() : 0); ++d) {
    for (std::size_t m = 0; m < models.size(); ++m) {
      tasks.emplace_back([&, d, m] {
        const auto& ds = data[d];
        staged("feature_sets", ds.name, [&] {
          const auto lab = primary_labels(ds, cfg.label_mode);
          const auto split = learn::stratified_split(*lab.y, cfg.test_fraction, seed);
          const learn::ClassifierSpec spec(models[m].algo, models[m].params, seed);
          std::vector<std::string> row{ds.name, std::string(learn::algo_name(models[m].algo))};
          for (auto set : cfg.feature_sets) {
            append(row, prf(fit_eval(spec, ds.x.select_columns(feature_columns(set, lab.guard)), *lab.y, split)));
          }
          fs_slots[d * models.size() + m].push_back(std::move(row));
          return 0;
        });
      });
    }
  }

  // --- all features vs PCA vs Shapiro-selected; ranking; correlation
  auto sel_slots = slots_for(cfg.feature_selection ? data.size() : 0);
  auto rank_slots = slots_for(cfg.feature_selection ? data.size() : 0);
  std::vector<std::string> correlation(data.size());
  if (cfg.feature_selection) {
    for (std::size_t d = 0; d < data.size(); ++d) {
      tasks.emplace_back([&, d] {
        const auto& ds = data[d];
        staged("featan", ds.name, [&] {
          const auto corr = featan::pearson_matrix(ds.x);
          std::string text = "feature";
          for (const auto& n : corr.names) text += "," + csv_field(n);
          text += '\n';
          for (Eigen::Index i = 0; i < corr.r.rows(); ++i) {
            text += csv_field(corr.names[static_cast<std::size_t>(i)]);
            for (Eigen::Index j = 0; j < corr.r.cols(); ++j) text += "," + num(corr.r(i, j));
            text += '\n';
          }
          correlation[d] = std::move(text);

          const auto lab = primary_labels(ds, cfg.label_mode);
          const auto x = ds.x.select_columns(feature_columns(FeatureSet::CyberPhysical, lab.guard));
          const auto split = learn::stratified_split(*lab.y, cfg.test_fraction, seed);
          const auto xtr = x.select_rows(split.train);
          const auto xte = x.select_rows(split.test);
          const auto ytr = learn::take(*lab.y, split.train);
          const auto yte = learn::take(*lab.y, split.test);
          const auto pca = featan::pca_fit_transform(xtr.values, cfg.pca_threshold);
          const Matrix pte = pca.model.transform(xte.values);
          const auto scores = featan::shapiro_rank(xtr, seed);
          const auto chosen = featan::select_features(scores, cfg.shapiro_cutoff);

          auto ranked = scores;
          std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.w > b.w; });
          const std::set<std::size_t> chosen_set(chosen.begin(), chosen.end());
          for (const auto& s : ranked) {
            rank_slots[d].push_back({ds.name, s.name, num(s.w), s.constant ? "constant" : (chosen_set.count(s.column) ? "yes" : "no")});
          }
          for (const auto& entry : models) {
            const learn::ClassifierSpec spec(entry.algo, entry.params, seed);
            std::vector<std::string> row{ds.name, std::string(learn::algo_name(entry.algo))};
            append(row, prf(fit_eval(spec, xtr.values, ytr, xte.values, yte)));
            append(row, prf(fit_eval(spec, pca.projected, ytr, pte, yte)));
            if (chosen.empty()) {
              append(row, {"-", "-", "-"});
            } else {
              append(row, prf(fit_eval(spec, xtr.select_columns(chosen).values, ytr, xte.select_columns(chosen).values, yte)));
            }
            row.push_back(std::to_string(pca.model.k()));
            row.push_back(std::to_string(chosen.size()));
            sel_slots[d].push_back(std::move(row));
          }
          return 0;
        });
      });
    }
  }

  // --- co-training vs supervised on the labeled part
  auto co_slots = slots_for(cfg.cotrain.enabled ? data.size() * cotrain_seeds.size() * cfg.cotrain.bases.size() : 0);
  if (cfg.cotrain.enabled) {
    std::size_t slot = 0;
    for (std::size_t d = 0; d < data.size(); ++d) {
      for (auto s : cotrain_seeds) {
        for (auto base : cfg.cotrain.bases) {
          tasks.emplace_back([&, d, s, base, slot] {
            const auto& ds = data[d];
            staged("cotrain", ds.name, [&] {
              const auto lab = primary_labels(ds, cfg.label_mode);
              const auto x = ds.x.select_columns(feature_columns(FeatureSet::CyberPhysical, lab.guard));
              cotrain::ViewSplit views;
              if (cfg.cotrain.cyber_columns.empty()) {
                for (const auto& c : x.columns) {
                  auto& v = index_of(*column_by_name(c.name)) < kNumCyberColumns ? views.cyber : views.physical;
                  v.push_back(c.name);
                }
              } else {
                // guarded alert columns may be named; they are simply absent
                const auto names = x.names();
                std::vector<std::string> cyber;
                for (const auto& c : cfg.cotrain.cyber_columns)
                  if (std::find(names.begin(), names.end(), c) != names.end()) cyber.push_back(c);
                views = cotrain::split_with_cyber(names, cyber);
              }
              const auto split = learn::stratified_split(*lab.y, cfg.test_fraction, s);
              const auto trx = x.select_rows(split.train);
              const auto try_ = learn::take(*lab.y, split.train);
              const auto tx = x.select_rows(split.test);
              const auto ty = learn::take(*lab.y, split.test);
              const auto lu = cotrain::labeled_unlabeled_split(try_, cfg.cotrain.labeled_parts, cfg.cotrain.unlabeled_parts, s);
              const auto lx = trx.select_rows(lu.train);
              const auto ly = learn::take(try_, lu.train);
              const learn::ClassifierSpec spec(base, {}, s);
              const auto sup = learn::evaluate(ty, learn::predict(learn::train(spec, lx, ly), tx));
              const auto m = cotrain::cotrain_fit(spec, lx, ly, trx.select_rows(lu.test), views, cfg.cotrain.max_loops);
              const auto co = learn::evaluate(ty, cotrain::cotrain_predict(m, tx).labels);
              std::vector<std::string> row{ds.name, std::to_string(s), std::string(learn::algo_name(base))};
              append(row, prf(sup));
              append(row, prf(co));
              row.push_back(std::to_string(m.log.size()));
              co_slots[slot].push_back(std::move(row));
              return 0;
            });
          });
          ++slot;
        }
      }
    }
  }

  // Clustering and manifold benches run on the scenarios merged into one table.
  std::vector<fusion::FusedRecord> merged;
  std::vector<std::string> merged_labels;
  bool merged_guard = false;
  for (const auto& ds : data) {
    merged.insert(merged.end(), ds.table.begin(), ds.table.end());
    const auto lab = primary_labels(ds, cfg.label_mode);
    merged_labels.insert(merged_labels.end(), lab.y->begin(), lab.y->end());
    merged_guard = lab.guard;
  }

  // --- clustering: sweep, optimal k per metric, robustness
  std::vector<int> ks;
  for (int k = cfg.cluster.k_min; k <= cfg.cluster.k_max; ++k) ks.push_back(k);
  auto sweep_slots = slots_for(cfg.cluster.enabled ? cfg.cluster.algos.size() : 0);
  auto opt_slots = sweep_slots;
  auto robust_slots = slots_for(cfg.cluster.enabled ? cfg.cluster.algos.size() : 0);
  Matrix cluster_x;
  std::vector<std::string> cluster_truth;
  if (cfg.cluster.enabled) {
    staged("cluster", "merged", [&] {
      const auto idx = subsample(merged.size(), cfg.cluster.max_rows, seed);
      std::vector<fusion::FusedRecord> rows;
      for (auto i : idx) rows.push_back(merged[i]);
      cluster_x = cluster::row_normalize(fusion::scale(fusion::encode(rows), cfg.scale).values);
      cluster_truth = alert_structure(rows);
      return 0;
    });
    for (std::size_t a = 0; a < cfg.cluster.algos.size(); ++a) {
      tasks.emplace_back([&, a] {
        const auto algo = cfg.cluster.algos[a];
        const std::string name(cluster::algo_name(algo));
        staged("cluster", name, [&] {
          struct Scores {
            double s, ch, ar, db;
          };
          auto score = [&](const Matrix& x, const std::vector<int>& labels, const std::vector<std::string>& truth) {
            Scores out{std::nan(""), std::nan(""), cluster::adjusted_rand(truth, labels), std::nan("")};
            if (std::set<int>(labels.begin(), labels.end()).size() >= 2) {
              const auto q = cluster::cluster_quality(x, labels);
              out.s = q.silhouette;
              out.ch = q.calinski_harabasz;
              out.db = q.davies_bouldin;
            }
            return out;
          };
          const auto results = cluster::cluster_sweep(algo, cluster_x, ks, seed);
          std::vector<Scores> per_k;
          for (std::size_t i = 0; i < results.size(); ++i) {
            const auto& r = results[i];
            per_k.push_back(score(cluster_x, r.labels, cluster_truth));
            const auto& q = per_k.back();
            const auto found = std::set<int>(r.labels.begin(), r.labels.end()).size();
            sweep_slots[a].push_back({name, std::to_string(ks[i]), std::to_string(found), num(q.s), num(q.ch), num(q.ar),
                                      num(q.db)});
          }
          // optimum: max S, CH, AR and min DB; first k on ties, NaN never wins
          auto best = [&](auto get, bool lower) {
            int k = 0;
            double bv = 0.0;
            for (std::size_t i = 0; i < per_k.size(); ++i) {
              const double v = get(per_k[i]);
              if (std::isnan(v)) continue;
              if (k == 0 || (lower ? v < bv : v > bv)) {
                k = ks[i];
                bv = v;
              }
            }
            return k == 0 ? std::string("-") : std::to_string(k);
          };
          opt_slots[a].push_back({name, best([](const Scores& q) { return q.s; }, false),
                                  best([](const Scores& q) { return q.ch; }, false),
                                  best([](const Scores& q) { return q.ar; }, false),
                                  best([](const Scores& q) { return q.db; }, true)});

          // per-dataset scores at a fixed k: the data-alteration series
          std::vector<Scores> per_data;
          for (const auto& ds : data) {
            const auto idx = subsample(ds.table.size(), cfg.cluster.max_rows, seed);
            std::vector<fusion::FusedRecord> rows;
            for (auto i : idx) rows.push_back(ds.table[i]);
            const Matrix x = cluster::row_normalize(fusion::scale(fusion::encode(rows), cfg.scale).values);
            const auto r = cluster::cluster(algo, x, cfg.cluster.robustness_k, seed);
            per_data.push_back(score(x, r.labels, alert_structure(rows)));
          }
          const std::pair<const char*, double Scores::*> metrics[] = {
              {"S", &Scores::s}, {"CH", &Scores::ch}, {"AR", &Scores::ar}, {"DB", &Scores::db}};
          for (const auto& [metric, field] : metrics) {
            auto stats = [&](const std::vector<Scores>& series) {
              std::vector<double> v;
              for (const auto& q : series)
                if (std::isfinite(q.*field)) v.push_back(q.*field);
              if (v.empty()) return std::vector<std::string>{"nan", "nan", "nan"};
              const auto st = cluster::robustness_stats(v);
              return std::vector<std::string>{num(st.mean), num(st.variance), num(st.nvar)};
            };
            std::vector<std::string> row{metric, name};
            append(row, stats(per_k));
            append(row, stats(per_data));
            robust_slots[a].push_back(std::move(row));
          }
          return 0;
        });
      });
    }
  }

  // --- manifold embeddings as classifier front-ends
  const std::size_t n_embed = cfg.manifold.enabled ? cfg.manifold.algos.size() + 1 : 0;
  auto man_slots = slots_for(n_embed);
  Matrix man_x;
  std::vector<std::string> man_y;
  learn::Split man_split;
  if (cfg.manifold.enabled) {
    staged("manifold", "merged", [&] {
      const auto idx = subsample(merged.size(), cfg.manifold.max_rows, seed);
      std::vector<fusion::FusedRecord> rows;
      for (auto i : idx) {
        rows.push_back(merged[i]);
        man_y.push_back(merged_labels[i]);
      }
      man_x = fusion::scale(fusion::encode(rows), cfg.scale)
                  .select_columns(feature_columns(FeatureSet::CyberPhysical, merged_guard))
                  .values;
      man_split = learn::stratified_split(man_y, cfg.test_fraction, seed);
      return 0;
    });
    for (std::size_t a = 0; a < n_embed; ++a) {
      tasks.emplace_back([&, a] {
        const bool raw = a == cfg.manifold.algos.size();
        const std::string name = raw ? "none" : std::string(manifold::algo_name(cfg.manifold.algos[a]));
        staged("manifold", name, [&] {
          Matrix coords = man_x;
          std::string st = "-";
          if (!raw) {
            // transductive: the unsupervised embedding sees every row, labels never
            coords = manifold::embed(cfg.manifold.algos[a], man_x, cfg.manifold.dim, seed).coords;
            st = num(manifold::stress(man_x, coords));
          }
          std::vector<std::string> row{name, st};
          const Matrix tr = rows_of(coords, man_split.train), te = rows_of(coords, man_split.test);
          const auto ytr = learn::take(man_y, man_split.train), yte = learn::take(man_y, man_split.test);
          for (auto algo : cfg.manifold.models) {
            row.push_back(num(fit_eval(learn::ClassifierSpec(algo, {}, seed), tr, ytr, te, yte).weighted_f1));
          }
          man_slots[a].push_back(std::move(row));
          return 0;
        });
      });
    }
  }

  run_all(tasks);

  auto table = [&](std::string name, std::string title, std::vector<std::string> header, const auto& slots) {
    Table t{std::move(name), std::move(title), std::move(header), {}};
    for (const auto& s : slots) t.rows.insert(t.rows.end(), s.begin(), s.end());
    report.tables.push_back(std::move(t));
  };
  const std::vector<std::string> prf_cols{"f1", "rec", "prec"};
  auto block = [&](std::vector<std::string> head, const std::vector<std::string>& prefixes) {
    for (const auto& p : prefixes)
      for (const auto& c : prf_cols) head.push_back(p + "_" + c);
    return head;
  };
  const std::string label_name(label_choice_name(cfg.label_mode == LabelChoice::Snort ? LabelChoice::Snort
                                                                                      : LabelChoice::AttackWindow));
  if (paired) {
    table("labels", "Snort labels vs attack-window labels (weighted metrics, alert columns excluded)",
          block({"scenario", "classifier"}, {"snort", "window"}), label_slots);
  }
  if (cfg.supervised) {
    table("classifiers", fmt::format("Classifiers per scenario ({} labels)", label_name),
          block({"scenario", "use_case", "masters", "polling_s", "classifier", "params"}, {"test"}), clf_slots);
    std::vector<std::string> set_names;
    for (auto s : cfg.feature_sets) set_names.emplace_back(feature_set_name(s));
    table("feature_sets", "Pure cyber, pure physical and cyber-physical features", block({"scenario", "classifier"}, set_names),
          fs_slots);
  }
  if (cfg.feature_selection) {
    auto head = block({"scenario", "classifier"}, {"all", "pca", "shapiro"});
    head.push_back("pca_components");
    head.push_back("shapiro_selected");
    table("feature_selection", fmt::format("All features, PCA ({}) and Shapiro W >= {}", format_number(cfg.pca_threshold),
                                           format_number(cfg.shapiro_cutoff)),
          head, sel_slots);
    table("shapiro_ranking", "Shapiro-Wilk ranking of the training features", {"scenario", "feature", "w", "selected"},
          rank_slots);
    for (std::size_t d = 0; d < data.size(); ++d) report.artifacts["correlation_" + data[d].name + ".csv"] = correlation[d];
  }
  if (cfg.cotrain.enabled) {
    auto head = block({"scenario", "seed", "classifier"}, {"supervised", "cotrain"});
    head.push_back("loops");
    table("cotrain",
          fmt::format("Supervised on the labeled part vs co-training ({}:{} labeled:unlabeled)", cfg.cotrain.labeled_parts,
                      cfg.cotrain.unlabeled_parts),
          head, co_slots);
  }
  if (cfg.cluster.enabled) {
    table("cluster_sweep", "Cluster validity per k (merged scenarios, row-normalized)",
          {"algo", "k", "found", "S", "CH", "AR", "DB"}, sweep_slots);
    table("cluster_optimal", "Optimal number of clusters per metric", {"algo", "S", "CH", "AR", "DB"}, opt_slots);
    table("cluster_robustness",
          fmt::format("Robustness: k = {}..{} on merged data, and k = {} across scenarios", cfg.cluster.k_min,
                      cfg.cluster.k_max, cfg.cluster.robustness_k),
          {"metric", "algo", "param_mean", "param_var", "param_nvar", "data_mean", "data_var", "data_nvar"},
          robust_slots);
  }
  if (cfg.manifold.enabled) {
    std::vector<std::string> head{"embedding", "stress"};
    for (auto a : cfg.manifold.models) head.push_back(std::string(learn::algo_name(a)) + "_f1");
    table("manifold", fmt::format("Classifier F1 on {}-d embeddings", cfg.manifold.dim), head, man_slots);
  }

  ordered_json prov;
  prov["tool"] = "cpfusion";
  prov["version"] = kVersion;
  prov["config_hash"] = report.config_hash;
  prov["libraries"] = {
      {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
      {"fmt", fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100)},
      {"spdlog", fmt::format("{}.{}.{}", SPDLOG_VER_MAJOR, SPDLOG_VER_MINOR, SPDLOG_VER_PATCH)},
      {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                    NLOHMANN_JSON_VERSION_PATCH)},
      {"boost", BOOST_LIB_VERSION}};
  ordered_json seeds;
  seeds["global"] = seed;
  seeds["split"] = seed;
  seeds["models"] = seed;
  seeds["cluster"] = seed;
  seeds["manifold"] = seed;
  seeds["cotrain"] = cotrain_seeds;
  seeds["scenarios"] = ordered_json::object();
  for (const auto& ds : data) seeds["scenarios"][ds.name] = ds.spec.seed;
  prov["seeds"] = seeds;
  prov["config"] = ordered_json::parse(config_to_json(cfg));
  report.provenance = prov.dump(2);
  return report;
}

void write_report(const Report& report, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path staging = dir.parent_path() / ("." + dir.filename().string() + ".staging");
  std::error_code ec;
  fs::remove_all(staging, ec);
  fs::create_directories(staging, ec);
  if (ec) throw Error(Errc::Io, fmt::format("cannot create {}: {}", staging.string(), ec.message()));
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& t : report.tables) files.emplace_back(t.name + ".csv", t.csv());
  for (const auto& [name, text] : report.artifacts) files.emplace_back(name, text);
  files.emplace_back("summary.txt", report.summary());
  files.emplace_back("provenance.json", report.provenance + "\n");
  for (const auto& [name, text] : files) {
    std::ofstream out(staging / name, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
      fs::remove_all(staging, ec);
      throw Error(Errc::Io, fmt::format("cannot write {}", (staging / name).string()));
    }
  }
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::Io, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  for (const auto& [name, text] : files) {
    fs::rename(staging / name, dir / name, ec);
    if (ec) throw Error(Errc::Io, fmt::format("cannot move {} into {}: {}", name, dir.string(), ec.message()));
  }
  fs::remove_all(staging, ec);
}

Table read_table_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, fmt::format("cannot read {}", path.string()));
  Table t;
  t.name = path.stem().string();
  t.title = t.name;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      if (cells.size() != t.header.size()) {
        throw Error(Errc::ParseError, fmt::format("{}: {} fields, header has {}", path.string(), cells.size(), t.header.size()),
                    line_no);
      }
      t.rows.push_back(std::move(cells));
    }
  }
  if (t.header.empty()) throw Error(Errc::ParseError, fmt::format("{} is empty", path.string()));
  return t;
}

Table compare(const Table& source, std::string_view what) {
  struct Plan {
    std::vector<std::string> keys;
    std::string a, b;
  };
  Plan plan;
  if (what == "labels") {
    plan = {{"scenario", "classifier"}, "snort_f1", "window_f1"};
  } else if (what == "feature_sets") {
    plan = {{"scenario", "classifier"}, "pure_cyber_f1", "cyber_physical_f1"};
  } else if (what == "cotrain") {
    plan = {{"scenario", "seed", "classifier"}, "supervised_f1", "cotrain_f1"};
  } else {
    throw Error(Errc::InvalidArgument, fmt::format("cannot compare '{}'; use labels, feature_sets or cotrain", what));
  }
  auto col = [&](const std::string& name) {
    const auto it = std::find(source.header.begin(), source.header.end(), name);
    if (it == source.header.end()) throw Error(Errc::ColumnNotFound, fmt::format("table {} has no column '{}'", source.name, name));
    return static_cast<std::size_t>(it - source.header.begin());
  };
  std::vector<std::size_t> key_idx;
  for (const auto& k : plan.keys) key_idx.push_back(col(k));
  const auto ia = col(plan.a), ib = col(plan.b);
  Table out;
  out.name = fmt::format("compare_{}", what);
  out.title = fmt::format("{} vs {}", plan.a, plan.b);
  out.header = plan.keys;
  out.header.insert(out.header.end(), {plan.a, plan.b, "delta"});
  for (const auto& r : source.rows) {
    std::vector<std::string> row;
    for (auto k : key_idx) row.push_back(r[k]);
    row.push_back(r[ia]);
    row.push_back(r[ib]);
    try {
      row.push_back(num(std::stod(r[ib]) - std::stod(r[ia])));
    } catch (const std::exception&) {
      row.emplace_back("-");
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace cpfusion::pipeline
