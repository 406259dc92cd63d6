#pragma once

#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpfusion/common.hpp"
#include "cpfusion/learn.hpp"
#include "cpfusion/rng.hpp"

namespace cpfusion::learn::detail {

using json = nlohmann::json;

/// Fitted on integer class ids 0..n_classes-1; every id occurs at least once.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual void fit(const Matrix& x, const std::vector<int>& y, int n_classes) = 0;
  /// n x n_classes, rows summing to 1.
  virtual Matrix predict_proba(const Matrix& x) const = 0;
  virtual json save() const = 0;
  virtual void load(const json& state) = 0;
};

std::unique_ptr<Classifier> make_classifier(Algo algo, const Hyperparams& params, std::uint64_t seed);

std::unique_ptr<Classifier> make_tree(const Hyperparams& params, std::uint64_t seed);
std::unique_ptr<Classifier> make_forest(const Hyperparams& params, std::uint64_t seed);
std::unique_ptr<Classifier> make_gnb(const Hyperparams& params);
std::unique_ptr<Classifier> make_bnb(const Hyperparams& params);
std::unique_ptr<Classifier> make_lr(const Hyperparams& params);
std::unique_ptr<Classifier> make_svc(const Hyperparams& params, std::uint64_t seed);
std::unique_ptr<Classifier> make_mlp(const Hyperparams& params, std::uint64_t seed);
std::unique_ptr<Classifier> make_knn(const Hyperparams& params);

// ------------------------------------------------------- shared numerics

/// Per-column standardization; zero-spread columns keep scale 1.
struct Standardizer {
  Vector mean;
  Vector scale;

  void fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;
  json save() const;
  void load(const json& j);
};

/// Row-wise softmax of scores, stable against overflow.
Matrix softmax_rows(const Matrix& scores);

json to_json(const Matrix& m);
Matrix matrix_from_json(const json& j);
json to_json(const Vector& v);
Vector vector_from_json(const json& j);

}  // namespace cpfusion::learn::detail
