#include "cpfusion/learn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "learn_detail.hpp"

namespace cpfusion::learn {

namespace {

struct ParamRule {
  const char* key;
  double default_value;
  double min_value;
  bool integer;
};

const std::vector<ParamRule>& rules(Algo algo) {
  static const std::map<Algo, std::vector<ParamRule>> table = {
      {Algo::DT, {{"max_depth", 0, 0, true}, {"min_samples_split", 2, 2, true}, {"min_samples_leaf", 1, 1, true}}},
      {Algo::RF,
       {{"n_estimators", 100, 1, true},
        {"max_depth", 0, 0, true},
        {"min_samples_split", 2, 2, true},
        {"min_samples_leaf", 1, 1, true},
        {"max_features", 0, 0, true},  // 0: sqrt(p)
        {"bootstrap", 1, 0, true}}},
      {Algo::GNB, {{"var_smoothing", 1e-9, 0, false}}},
      {Algo::BNB, {{"alpha", 1.0, 0, false}, {"binarize", 0.5, 0, false}}},
      {Algo::LR, {{"learning_rate", 0.1, 0, false}, {"l2", 1e-4, 0, false}, {"epochs", 1000, 1, true}}},
      {Algo::SVC, {{"lambda", 1e-4, 1e-12, false}, {"epochs", 20, 1, true}}},
      {Algo::MLP,
       {{"hidden_units", 100, 1, true},
        {"learning_rate", 1e-3, 0, false},
        {"momentum", 0.9, 0, false},
        {"batch_size", 32, 1, true},
        {"epochs", 200, 1, true},
        {"l2", 0.0, 0, false}}},
      {Algo::KNN, {{"k", 5, 1, true}}},
  };
  return table.at(algo);
}

std::vector<int> encode_classes(const std::vector<std::string>& y, std::vector<std::string>& classes) {
  std::set<std::string> uniq(y.begin(), y.end());
  classes.assign(uniq.begin(), uniq.end());
  std::vector<int> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    out[i] = static_cast<int>(std::lower_bound(classes.begin(), classes.end(), y[i]) - classes.begin());
  }
  return out;
}

Model train_impl(const ClassifierSpec& spec, const Matrix& x, const std::vector<std::string>& y,
                 std::string fingerprint) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw Error(Errc::LengthMismatch, fmt::format("{} rows but {} labels", x.rows(), y.size()));
  }
  if (y.size() < 2) throw Error(Errc::TooFewRows, "training needs at least two rows");
  if (!x.allFinite()) throw Error(Errc::NonFiniteFeature, "training matrix has non-finite entries");
  Model m;
  m.algo = spec.algo;
  m.params = spec.resolved();
  m.seed = spec.seed;
  m.fingerprint = std::move(fingerprint);
  const auto yi = encode_classes(y, m.classes);
  if (m.classes.size() < 2) {
    throw Error(Errc::SingleClassTraining, fmt::format("only class '{}' is present", m.classes.front()));
  }
  auto impl = detail::make_classifier(spec.algo, m.params, spec.seed);
  impl->fit(x, yi, static_cast<int>(m.classes.size()));
  m.impl = std::move(impl);
  return m;
}

Matrix proba_impl(const Model& m, const Matrix& x, const std::string& fingerprint) {
  if (!m.impl) throw Error(Errc::InvalidArgument, "model is not fitted");
  if (fingerprint != m.fingerprint) {
    throw Error(Errc::ColumnMismatch,
                fmt::format("input columns {} differ from training columns {}", fingerprint, m.fingerprint));
  }
  if (!x.allFinite()) throw Error(Errc::NonFiniteFeature, "prediction matrix has non-finite entries");
  return m.impl->predict_proba(x);
}

}  // namespace

std::string_view algo_name(Algo algo) noexcept {
  switch (algo) {
    case Algo::SVC: return "SVC";
    case Algo::LR: return "LR";
    case Algo::GNB: return "GNB";
    case Algo::BNB: return "BNB";
    case Algo::DT: return "DT";
    case Algo::RF: return "RF";
    case Algo::MLP: return "MLP";
    case Algo::KNN: return "KNN";
  }
  return "?";
}

std::optional<Algo> parse_algo(std::string_view name) noexcept {
  for (auto a : kAllAlgos) {
    const auto n = algo_name(a);
    if (n.size() == name.size() &&
        std::equal(n.begin(), n.end(), name.begin(), [](char p, char q) { return p == std::toupper(q); })) {
      return a;
    }
  }
  return std::nullopt;
}

const Hyperparams& default_hyperparams(Algo algo) {
  static const auto table = [] {
    std::map<Algo, Hyperparams> t;
    for (auto a : kAllAlgos) {
      for (const auto& r : rules(a)) t[a][r.key] = r.default_value;
    }
    return t;
  }();
  return table.at(algo);
}

ClassifierSpec::ClassifierSpec(Algo a, Hyperparams p, std::uint64_t s) : algo(a), params(std::move(p)), seed(s) {
  const auto& rs = rules(algo);
  for (const auto& [key, value] : params) {
    const auto it = std::find_if(rs.begin(), rs.end(), [&](const ParamRule& r) { return key == r.key; });
    if (it == rs.end()) {
      throw Error(Errc::InvalidArgument, fmt::format("{} has no hyperparameter '{}'", algo_name(algo), key));
    }
    if (!std::isfinite(value) || value < it->min_value || (it->integer && value != std::floor(value))) {
      throw Error(Errc::InvalidArgument, fmt::format("{}: invalid value {} for '{}'", algo_name(algo), value, key));
    }
  }
}

Hyperparams ClassifierSpec::resolved() const {
  Hyperparams out = default_hyperparams(algo);
  for (const auto& [k, v] : params) out[k] = v;
  return out;
}

std::string column_fingerprint(const std::vector<std::string>& names, std::size_t n_cols) {
  std::uint64_t h = fnv1a64(std::to_string(n_cols));
  for (const auto& n : names) {
    h = fnv1a64("\x1f", h);
    h = fnv1a64(n, h);
  }
  return fmt::format("{:016x}", h);
}

Model train(const ClassifierSpec& spec, const fusion::FeatureMatrix& x, const std::vector<std::string>& y) {
  return train_impl(spec, x.values, y, column_fingerprint(x.names(), x.cols()));
}

Model train(const ClassifierSpec& spec, const Matrix& x, const std::vector<std::string>& y) {
  return train_impl(spec, x, y, column_fingerprint({}, static_cast<std::size_t>(x.cols())));
}

Matrix predict_proba(const Model& m, const fusion::FeatureMatrix& x) {
  return proba_impl(m, x.values, column_fingerprint(x.names(), x.cols()));
}

Matrix predict_proba(const Model& m, const Matrix& x) {
  return proba_impl(m, x, column_fingerprint({}, static_cast<std::size_t>(x.cols())));
}

std::vector<std::string> argmax_labels(const Matrix& proba, const std::vector<std::string>& classes) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(proba.rows()));
  for (Eigen::Index i = 0; i < proba.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < proba.cols(); ++j) {
      if (proba(i, j) > proba(i, best)) best = j;
    }
    out.push_back(classes[static_cast<std::size_t>(best)]);
  }
  return out;
}

std::vector<std::string> predict(const Model& m, const fusion::FeatureMatrix& x) {
  return argmax_labels(predict_proba(m, x), m.classes);
}

std::vector<std::string> predict(const Model& m, const Matrix& x) {
  return argmax_labels(predict_proba(m, x), m.classes);
}

// -------------------------------------------------------------- persistence

namespace {
constexpr const char* kModelFormat = "cpfusion-model";
constexpr int kModelVersion = 1;
}  // namespace

std::string model_to_json(const Model& m) {
  if (!m.impl) throw Error(Errc::InvalidArgument, "model is not fitted");
  nlohmann::ordered_json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["algo"] = algo_name(m.algo);
  j["params"] = m.params;
  j["seed"] = m.seed;
  j["classes"] = m.classes;
  j["fingerprint"] = m.fingerprint;
  j["state"] = m.impl->save();
  return j.dump();
}

Model model_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, fmt::format("model JSON: {}", e.what()));
  }
  try {
    if (j.at("format") != kModelFormat) throw Error(Errc::ParseError, "not a model file");
    if (j.at("version").get<int>() != kModelVersion) {
      throw Error(Errc::ParseError, fmt::format("unsupported model version {}", j.at("version").dump()));
    }
    const auto algo = parse_algo(j.at("algo").get<std::string>());
    if (!algo) throw Error(Errc::ParseError, "unknown algorithm tag");
    Model m;
    m.algo = *algo;
    m.params = j.at("params").get<Hyperparams>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.fingerprint = j.at("fingerprint").get<std::string>();
    auto impl = detail::make_classifier(m.algo, m.params, m.seed);
    impl->load(j.at("state"));
    m.impl = std::move(impl);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, fmt::format("model JSON: {}", e.what()));
  }
}

void save_model(const Model& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, fmt::format("cannot write {}", path.string()));
  out << model_to_json(m) << '\n';
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, fmt::format("cannot open {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

// ------------------------------------------------------------------ metrics

Metrics evaluate(const std::vector<std::string>& y_true, const std::vector<std::string>& y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw Error(Errc::LengthMismatch, fmt::format("{} truths vs {} predictions", y_true.size(), y_pred.size()));
  }
  Metrics m;
  std::set<std::string> uniq(y_true.begin(), y_true.end());
  uniq.insert(y_pred.begin(), y_pred.end());
  m.classes.assign(uniq.begin(), uniq.end());
  const auto k = m.classes.size();
  auto id = [&](const std::string& s) {
    return static_cast<std::size_t>(std::lower_bound(m.classes.begin(), m.classes.end(), s) - m.classes.begin());
  };
  m.confusion.assign(k, std::vector<std::int64_t>(k, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) ++m.confusion[id(y_true[i])][id(y_pred[i])];
  m.precision.assign(k, 0.0);
  m.recall.assign(k, 0.0);
  m.f1.assign(k, 0.0);
  m.support.assign(k, 0);
  std::int64_t correct = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::int64_t predicted = 0;
    for (std::size_t r = 0; r < k; ++r) {
      m.support[c] += m.confusion[c][r];
      predicted += m.confusion[r][c];
    }
    const auto tp = m.confusion[c][c];
    correct += tp;
    if (predicted > 0) m.precision[c] = static_cast<double>(tp) / static_cast<double>(predicted);
    if (m.support[c] > 0) m.recall[c] = static_cast<double>(tp) / static_cast<double>(m.support[c]);
    const double s = m.precision[c] + m.recall[c];
    if (s > 0) m.f1[c] = 2.0 * m.precision[c] * m.recall[c] / s;
  }
  const auto n = static_cast<double>(y_true.size());
  if (n > 0) {
    m.accuracy = static_cast<double>(correct) / n;
    for (std::size_t c = 0; c < k; ++c) {
      const double w = static_cast<double>(m.support[c]) / n;
      m.weighted_precision += w * m.precision[c];
      m.weighted_recall += w * m.recall[c];
      m.weighted_f1 += w * m.f1[c];
    }
  }
  return m;
}

// ------------------------------------------------------------------- splits

namespace {

std::map<std::string, std::vector<std::size_t>> by_class(const std::vector<std::string>& y) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < y.size(); ++i) out[y[i]].push_back(i);
  return out;
}

}  // namespace

Split stratified_split(const std::vector<std::string>& y, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(Errc::InvalidArgument, "test fraction must lie in (0, 1)");
  }
  Split s;
  std::uint64_t stream = 0;
  for (auto& [label, idx] : by_class(y)) {
    Rng rng(mix_seed(seed, stream++));
    rng.shuffle(std::span<std::size_t>(idx));
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    if (idx.size() >= 2) n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
    s.test.insert(s.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::vector<std::size_t> stratified_folds(const std::vector<std::string>& y, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw Error(Errc::InvalidArgument, "need at least two folds");
  std::vector<std::size_t> fold(y.size(), 0);
  std::uint64_t stream = 0;
  std::size_t offset = 0;
  for (auto& [label, idx] : by_class(y)) {
    if (idx.size() < folds) {
      throw Error(Errc::FoldTooSmall, fmt::format("class '{}' has {} rows for {} folds", label, idx.size(), folds));
    }
    Rng rng(mix_seed(seed, 0x1000 + stream++));
    rng.shuffle(std::span<std::size_t>(idx));
    // continue dealing where the previous class stopped so fold sizes stay even
    for (std::size_t i = 0; i < idx.size(); ++i) fold[idx[i]] = (offset + i) % folds;
    offset = (offset + idx.size()) % folds;
  }
  return fold;
}

// -------------------------------------------------------------- grid search

GridResult grid_search(const ClassifierSpec& spec, const fusion::FeatureMatrix& x, const std::vector<std::string>& y,
                       const Grid& grid, std::size_t folds) {
  if (grid.empty()) throw Error(Errc::InvalidArgument, "empty grid");
  for (const auto& [key, values] : grid) {
    if (values.empty()) throw Error(Errc::InvalidArgument, fmt::format("grid key '{}' has no values", key));
  }
  if (x.rows() != y.size()) throw Error(Errc::LengthMismatch, "rows and labels differ in length");
  const auto fold = stratified_folds(y, folds, spec.seed);

  std::vector<std::pair<std::string, const std::vector<double>*>> axes;
  for (const auto& [key, values] : grid) axes.emplace_back(key, &values);
  std::vector<std::size_t> pos(axes.size(), 0);

  GridResult result;
  bool first = true;
  while (true) {
    Hyperparams hp = spec.params;
    for (std::size_t a = 0; a < axes.size(); ++a) hp[axes[a].first] = (*axes[a].second)[pos[a]];
    const ClassifierSpec point(spec.algo, hp, spec.seed);

    double total = 0.0;
    for (std::size_t f = 0; f < folds; ++f) {
      std::vector<std::size_t> tr, te;
      for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? te : tr).push_back(i);
      const auto model = train(point, x.select_rows(tr), take(y, tr));
      total += evaluate(take(y, te), predict(model, x.select_rows(te))).weighted_f1;
    }
    const double score = total / static_cast<double>(folds);
    spdlog::debug("grid {} -> {:.6f}", fmt::join(pos, ","), score);
    result.points.push_back({hp, score});
    if (first || score > result.best_score) {
      result.best = hp;
      result.best_score = score;
      first = false;
    }

    // odometer: last key fastest
    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++pos[a] < axes[a].second->size()) break;
      pos[a] = 0;
      if (a == 0) return result;
    }
  }
}

// ------------------------------------------------------------ shared detail

namespace detail {

std::unique_ptr<Classifier> make_classifier(Algo algo, const Hyperparams& params, std::uint64_t seed) {
  switch (algo) {
    case Algo::DT: return make_tree(params, seed);
    case Algo::RF: return make_forest(params, seed);
    case Algo::GNB: return make_gnb(params);
    case Algo::BNB: return make_bnb(params);
    case Algo::LR: return make_lr(params);
    case Algo::SVC: return make_svc(params, seed);
    case Algo::MLP: return make_mlp(params, seed);
    case Algo::KNN: return make_knn(params);
  }
  throw Error(Errc::InvalidArgument, "unknown algorithm");
}

void Standardizer::fit(const Matrix& x) {
  mean = x.colwise().mean().transpose();
  scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double sd = std::sqrt((x.col(j).array() - mean(j)).square().mean());
    scale(j) = sd > 1e-12 ? sd : 1.0;
  }
}

Matrix Standardizer::apply(const Matrix& x) const {
  return ((x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
}

json Standardizer::save() const { return {{"mean", to_json(mean)}, {"scale", to_json(scale)}}; }

void Standardizer::load(const json& j) {
  mean = vector_from_json(j.at("mean"));
  scale = vector_from_json(j.at("scale"));
}

Matrix softmax_rows(const Matrix& scores) {
  Matrix p = scores.colwise() - scores.rowwise().maxCoeff();
  p = p.array().exp().matrix();
  const Vector s = p.rowwise().sum();
  return p.array().colwise() / s.array();
}

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Matrix matrix_from_json(const json& j) {
  const auto r = j.at("rows").get<Eigen::Index>();
  const auto c = j.at("cols").get<Eigen::Index>();
  Matrix m(r, c);
  const auto& data = j.at("data");
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = data.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>();
  return m;
}

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

}  // namespace cpfusion::learn
