#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpfusion/common.hpp"
#include "cpfusion/fusion.hpp"

// Supervised classifiers with probability outputs, metrics and grid search.
namespace cpfusion::learn {

enum class Algo { SVC, LR, GNB, BNB, DT, RF, MLP, KNN };

std::string_view algo_name(Algo algo) noexcept;
std::optional<Algo> parse_algo(std::string_view name) noexcept;
inline constexpr Algo kAllAlgos[] = {Algo::SVC, Algo::LR, Algo::GNB, Algo::BNB,
                                     Algo::DT,  Algo::RF, Algo::MLP, Algo::KNN};

using Hyperparams = std::map<std::string, double>;

/// Every accepted key of `algo` with its default value.
const Hyperparams& default_hyperparams(Algo algo);

struct ClassifierSpec {
  Algo algo = Algo::DT;
  Hyperparams params;  // overrides; unknown keys are rejected
  std::uint64_t seed = 0;

  /// Throws Error{InvalidArgument} naming the unknown or out-of-range key.
  ClassifierSpec(Algo a = Algo::DT, Hyperparams p = {}, std::uint64_t s = 0);

  /// Defaults overlaid with `params`.
  Hyperparams resolved() const;
};

namespace detail {
class Classifier;
}

/// A fitted, immutable model. Copies share the fitted state.
struct Model {
  Algo algo = Algo::DT;
  Hyperparams params;  // resolved
  std::uint64_t seed = 0;
  std::vector<std::string> classes;  // sorted
  std::string fingerprint;           // of the training columns
  std::shared_ptr<const detail::Classifier> impl;
};

/// Fingerprint of a column layout; an empty name list hashes only the count.
std::string column_fingerprint(const std::vector<std::string>& names, std::size_t n_cols);

/// Throws LengthMismatch, TooFewRows, SingleClassTraining, NonFiniteFeature.
Model train(const ClassifierSpec& spec, const fusion::FeatureMatrix& x, const std::vector<std::string>& y);
Model train(const ClassifierSpec& spec, const Matrix& x, const std::vector<std::string>& y);

/// Columns follow `m.classes`; rows sum to 1. Throws ColumnMismatch.
Matrix predict_proba(const Model& m, const fusion::FeatureMatrix& x);
Matrix predict_proba(const Model& m, const Matrix& x);
std::vector<std::string> predict(const Model& m, const fusion::FeatureMatrix& x);
std::vector<std::string> predict(const Model& m, const Matrix& x);

/// Row-wise argmax; ties go to the lower column (the lexicographically
/// smaller class).
std::vector<std::string> argmax_labels(const Matrix& proba, const std::vector<std::string>& classes);

/// Versioned JSON persistence.
std::string model_to_json(const Model& m);
Model model_from_json(std::string_view text);
void save_model(const Model& m, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

// ----------------------------------------------------------------- metrics

struct Metrics {
  std::vector<std::string> classes;  // union of truth and prediction, sorted
  std::vector<double> precision, recall, f1;
  std::vector<std::int64_t> support;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
  /// confusion[i][j]: truth classes[i] predicted as classes[j].
  std::vector<std::vector<std::int64_t>> confusion;
};

/// Zero-division convention: an undefined precision or recall is 0.
/// Throws Error{LengthMismatch}.
Metrics evaluate(const std::vector<std::string>& y_true, const std::vector<std::string>& y_pred);

// ------------------------------------------------------------ data splits

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per-class shuffle; each class contributes round(test_fraction * n_c)
/// rows to the test side, keeping at least one row on each side when the
/// class has two or more. Indices are returned sorted.
Split stratified_split(const std::vector<std::string>& y, double test_fraction, std::uint64_t seed);

/// Fold id per row; classes are dealt round-robin after a seeded shuffle.
/// Throws Error{FoldTooSmall} when a class has fewer rows than folds.
std::vector<std::size_t> stratified_folds(const std::vector<std::string>& y, std::size_t folds, std::uint64_t seed);

template <typename T>
std::vector<T> take(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

// ------------------------------------------------------------ grid search

using Grid = std::map<std::string, std::vector<double>>;

struct GridPoint {
  Hyperparams params;
  double score = 0.0;  // mean weighted F1 across folds
};

struct GridResult {
  Hyperparams best;
  double best_score = 0.0;
  std::vector<GridPoint> points;  // in grid order
};

/// Grid order: keys sorted, the last key varies fastest. Ties keep the
/// earliest point.
GridResult grid_search(const ClassifierSpec& spec, const fusion::FeatureMatrix& x, const std::vector<std::string>& y,
                       const Grid& grid, std::size_t folds = 5);

}  // namespace cpfusion::learn
