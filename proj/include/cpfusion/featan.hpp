#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cpfusion/common.hpp"
#include "cpfusion/fusion.hpp"

// Feature analysis: correlation, PCA reduction, normality-based ranking.
namespace cpfusion::featan {

struct CorrelationMatrix {
  Matrix r;
  std::vector<std::string> names;
  /// Constant columns: diagonal 1, off-diagonal 0 by convention.
  std::vector<bool> constant;
};

/// Throws Error{TooFewRows} below two rows.
CorrelationMatrix pearson_matrix(const Matrix& x, std::vector<std::string> names = {});
CorrelationMatrix pearson_matrix(const fusion::FeatureMatrix& x);

struct PcaModel {
  Vector means;
  Matrix components;        // p x k, orthonormal columns
  Vector explained_ratio;   // length k, non-increasing
  /// Ratios of every component, retained or not.
  Vector full_spectrum;

  std::size_t k() const { return static_cast<std::size_t>(components.cols()); }
  Matrix transform(const Matrix& x) const;
  Matrix inverse_transform(const Matrix& projected) const;
};

struct PcaResult {
  PcaModel model;
  Matrix projected;
};

/// Smallest k with cumulative explained variance >= threshold. Each
/// component's largest-|loading| entry is positive.
/// Throws Error{DegenerateMatrix} when every column is constant.
PcaResult pca_fit_transform(const Matrix& x, double variance_threshold = 0.95);

/// Shapiro-Wilk W with Royston's coefficient approximation; 3 <= n <= 5000.
/// Throws Error{TooFewRows}, Error{InvalidArgument} (n > 5000) or
/// Error{ConstantColumn}.
double shapiro_wilk_w(std::span<const double> sample);

inline constexpr std::size_t kShapiroMaxRows = 5000;

struct FeatureScore {
  std::string name;
  std::size_t column = 0;
  double w = 0.0;         // 0 for constant columns
  bool constant = false;
};

/// Per-column W; columns with more than 5000 rows are scored on a seeded
/// row sample shared by all columns.
std::vector<FeatureScore> shapiro_rank(const fusion::FeatureMatrix& x, std::uint64_t seed = 0);

/// Column indices with W >= cutoff, constant columns excluded, in column order.
std::vector<std::size_t> select_features(const std::vector<FeatureScore>& scores, double cutoff = 0.7);

}  // namespace cpfusion::featan
