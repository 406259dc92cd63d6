#include "cpfusion/featan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/SVD>
#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include "cpfusion/rng.hpp"

namespace cpfusion::featan {

CorrelationMatrix pearson_matrix(const Matrix& x, std::vector<std::string> names) {
  if (x.rows() < 2) throw Error(Errc::TooFewRows, "correlation needs at least two rows");
  const auto p = x.cols();
  const Matrix centered = x.rowwise() - x.colwise().mean();
  const Vector norms = centered.colwise().norm();
  CorrelationMatrix out;
  out.names = std::move(names);
  out.constant.assign(static_cast<std::size_t>(p), false);
  out.r = Matrix::Identity(p, p);
  // relative tolerance: a column is constant when its spread is roundoff
  for (Eigen::Index j = 0; j < p; ++j) {
    const double scale = std::max(1.0, x.col(j).cwiseAbs().maxCoeff());
    out.constant[static_cast<std::size_t>(j)] = norms(j) <= 1e-12 * scale * std::sqrt(static_cast<double>(x.rows()));
  }
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = a + 1; b < p; ++b) {
      double r = 0.0;
      if (!out.constant[static_cast<std::size_t>(a)] && !out.constant[static_cast<std::size_t>(b)]) {
        r = std::clamp(centered.col(a).dot(centered.col(b)) / (norms(a) * norms(b)), -1.0, 1.0);
      }
      out.r(a, b) = r;
      out.r(b, a) = r;
    }
  }
  return out;
}

CorrelationMatrix pearson_matrix(const fusion::FeatureMatrix& x) { return pearson_matrix(x.values, x.names()); }

Matrix PcaModel::transform(const Matrix& x) const {
  if (x.cols() != means.size()) throw Error(Errc::ShapeMismatch, "PCA input has the wrong column count");
  return (x.rowwise() - means.transpose()) * components;
}

Matrix PcaModel::inverse_transform(const Matrix& projected) const {
  return (projected * components.transpose()).rowwise() + means.transpose();
}

PcaResult pca_fit_transform(const Matrix& x, double variance_threshold) {
  if (x.rows() < 2) throw Error(Errc::TooFewRows, "PCA needs at least two rows");
  if (!(variance_threshold > 0.0 && variance_threshold <= 1.0)) {
    throw Error(Errc::InvalidArgument, "variance threshold must lie in (0, 1]");
  }
  PcaModel model;
  model.means = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - model.means.transpose();
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector sv = svd.singularValues();
  const Vector var = sv.array().square();
  const double total = var.sum();
  if (!(total > 1e-300) || sv(0) <= 1e-12 * std::max(1.0, centered.cwiseAbs().maxCoeff())) {
    throw Error(Errc::DegenerateMatrix, "every column is constant");
  }
  model.full_spectrum = var / total;
  Eigen::Index k = 0;
  double cum = 0.0;
  while (k < var.size()) {
    cum += model.full_spectrum(k);
    ++k;
    if (cum >= variance_threshold - 1e-12) break;
  }
  Matrix comps = svd.matrixV().leftCols(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    comps.col(c).cwiseAbs().maxCoeff(&arg);
    if (comps(arg, c) < 0) comps.col(c) *= -1.0;
  }
  model.components = std::move(comps);
  model.explained_ratio = model.full_spectrum.head(k);
  PcaResult out;
  out.projected = centered * model.components;
  out.model = std::move(model);
  return out;
}

namespace {

double poly(const double* c, int n, double x) {
  double r = c[n - 1];
  for (int i = n - 2; i >= 0; --i) r = r * x + c[i];
  return r;
}

}  // namespace

double shapiro_wilk_w(std::span<const double> sample) {
  const auto n = sample.size();
  if (n < 3) throw Error(Errc::TooFewRows, "Shapiro-Wilk needs at least three values");
  if (n > kShapiroMaxRows) throw Error(Errc::InvalidArgument, "Shapiro-Wilk is limited to 5000 values");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  const double range = x.back() - x.front();
  if (!(range > 1e-12 * std::max(1.0, std::abs(x.back())))) {
    throw Error(Errc::ConstantColumn, "Shapiro-Wilk on a constant sample");
  }

  // Royston's approximation of the coefficients (lower half, positive).
  const std::size_t half = n / 2;
  std::vector<double> a(half);
  if (n == 3) {
    a[0] = std::sqrt(0.5);
  } else {
    static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056};
    static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
    const boost::math::normal_distribution<double> std_normal;
    const double dn = static_cast<double>(n);
    std::vector<double> m(half);
    double summ2 = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
      m[i] = boost::math::quantile(std_normal, (static_cast<double>(i + 1) - 0.375) / (dn + 0.25));
      summ2 += m[i] * m[i];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(dn);
    const double a1 = poly(c1, 6, rsn) - m[0] / ssumm2;
    std::size_t first = 1;
    double fac = 0.0;
    if (n > 5) {
      const double a2 = -m[1] / ssumm2 + poly(c2, 6, rsn);
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[1] = a2;
      first = 2;
    } else {
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
    }
    a[0] = a1;
    for (std::size_t i = first; i < half; ++i) a[i] = -m[i] / fac;
  }

  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double ssq = 0.0;
  for (double v : x) ssq += (v - mean) * (v - mean);
  double num = 0.0;
  for (std::size_t i = 0; i < half; ++i) num += a[i] * (x[n - 1 - i] - x[i]);
  return std::min(1.0, num * num / ssq);
}

std::vector<FeatureScore> shapiro_rank(const fusion::FeatureMatrix& x, std::uint64_t seed) {
  const auto n = x.rows();
  if (n < 3) throw Error(Errc::TooFewRows, "Shapiro ranking needs at least three rows");
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (n > kShapiroMaxRows) {
    Rng rng(mix_seed(seed, 0x5a));
    rng.shuffle(std::span<std::size_t>(rows));
    rows.resize(kShapiroMaxRows);
    std::sort(rows.begin(), rows.end());
  }
  std::vector<FeatureScore> out;
  std::vector<double> col(rows.size());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    FeatureScore s;
    s.name = c < x.columns.size() ? x.columns[c].name : fmt::format("f{}", c);
    s.column = c;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      col[i] = x.values(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(c));
    }
    try {
      s.w = shapiro_wilk_w(col);
    } catch (const Error& e) {
      if (e.code() != Errc::ConstantColumn) throw;
      s.constant = true;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::size_t> select_features(const std::vector<FeatureScore>& scores, double cutoff) {
  std::vector<std::size_t> out;
  for (const auto& s : scores) {
    if (!s.constant && s.w >= cutoff) out.push_back(s.column);
  }
  return out;
}

}  // namespace cpfusion::featan
