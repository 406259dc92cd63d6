#include "cpfusion/manifold.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cpfusion/rng.hpp"
#include "neighbors.hpp"

namespace cpfusion::manifold {

namespace {

using Index = Eigen::Index;

void require_finite(const Matrix& x, const char* what) {
  if (!x.allFinite()) throw Error(Errc::NonFiniteInput, fmt::format("{}: input has non-finite values", what));
}

// Largest-|entry| positive per column, so embeddings do not flip between
// eigen-solver versions.
void fix_signs(Matrix& m) {
  for (Index c = 0; c < m.cols(); ++c) {
    Index arg = 0;
    m.col(c).cwiseAbs().maxCoeff(&arg);
    if (m(arg, c) < 0) m.col(c) *= -1.0;
  }
}

// Weights w (summing to 1) minimizing |x - sum_j w_j nbr_j|^2 + reg * trace * |w|^2.
Vector barycentric(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Matrix& nbrs, double reg) {
  const Matrix z = nbrs.rowwise() - x;
  Matrix c = z * z.transpose();
  const double tr = c.trace();
  c.diagonal().array() += tr > 0 ? reg * tr : reg;
  Vector w = c.ldlt().solve(Vector::Ones(c.rows()));
  return w / w.sum();
}

Matrix gather(const Matrix& x, const std::vector<detail::Neighbor>& nbrs) {
  Matrix out(static_cast<Index>(nbrs.size()), x.cols());
  for (std::size_t j = 0; j < nbrs.size(); ++j) out.row(static_cast<Index>(j)) = x.row(static_cast<Index>(nbrs[j].index));
  return out;
}

Embedding lle(const Matrix& x, int d, const Params& p) {
  Embedding e;
  const Matrix w = lle_weights(x, p.n_neighbors, p.lle_reg, &e.disconnected_graph);
  const auto n = x.rows();
  Matrix iw = Matrix::Identity(n, n) - w;
  const Matrix m = iw.transpose() * iw;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) throw Error(Errc::DegenerateMatrix, "lle: eigendecomposition failed");
  // skip the constant eigenvector at eigenvalue ~0
  e.coords = es.eigenvectors().middleCols(1, d);
  return e;
}

Embedding spectral(const Matrix& x, int d, const Params& p) {
  Embedding e;
  const auto n = x.rows();
  const auto g = detail::connected_knn_graph(x, p.n_neighbors);
  e.disconnected_graph = g.bridges > 0;
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (const auto& nb : g.lists[static_cast<std::size_t>(i)]) {
      a(i, static_cast<Index>(nb.index)) = 1.0;
      a(static_cast<Index>(nb.index), i) = 1.0;
    }
  }
  const Vector inv_sqrt = a.rowwise().sum().array().rsqrt();
  Matrix l = -(inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal());
  l.diagonal().array() += 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(l);
  if (es.info() != Eigen::Success) throw Error(Errc::DegenerateMatrix, "spectral: eigendecomposition failed");
  // random-walk eigenvectors D^-1/2 u, dropping the trivial one
  e.coords = inv_sqrt.asDiagonal() * es.eigenvectors().middleCols(1, d);
  return e;
}

Embedding mds(const Matrix& x, int d, std::uint64_t seed, const Params& p) {
  Embedding e;
  Rng rng(seed);
  Matrix init(x.rows(), d);
  for (Index i = 0; i < init.size(); ++i) init.data()[i] = rng.uniform();
  auto r = smacof(detail::pairwise_distances(x), std::move(init), p.mds_max_iter, p.mds_tol);
  e.coords = std::move(r.y);
  e.stress_trace = std::move(r.trace);
  return e;
}

Embedding isomap(const Matrix& x, int d, const Params& p) {
  Embedding e;
  e.coords = classical_mds(geodesic_distances(x, p.n_neighbors, &e.disconnected_graph), d);
  return e;
}

// Exact t-SNE gradient 4 sum_j (p_ij - q_ij) (y_i - y_j) / (1 + |y_i - y_j|^2).
Matrix tsne_gradient(const Matrix& p, const Matrix& y, double exaggeration) {
  const auto n = y.rows();
  Matrix num(n, n);
  double z = 0.0;
  for (Index i = 0; i < n; ++i) {
    num(i, i) = 0.0;
    for (Index j = i + 1; j < n; ++j) {
      const double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
      num(i, j) = num(j, i) = v;
      z += 2.0 * v;
    }
  }
  Matrix grad = Matrix::Zero(n, y.cols());
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double q = std::max(num(i, j) / z, 1e-12);
      grad.row(i) += (exaggeration * p(i, j) - q) * num(i, j) * (y.row(i) - y.row(j));
    }
  }
  return 4.0 * grad;
}

Embedding tsne(const Matrix& x, int d, std::uint64_t seed, const Params& p) {
  Embedding e;
  const Matrix pj = tsne_affinities(x, p.perplexity).p;
  const auto n = x.rows();
  Rng rng(seed);
  Matrix y(n, d);
  for (Index i = 0; i < y.size(); ++i) y.data()[i] = 1e-4 * rng.normal();
  Matrix update = Matrix::Zero(n, d);
  Matrix gains = Matrix::Ones(n, d);
  for (int it = 0; it < p.tsne_iter; ++it) {
    const bool early = it < p.exaggeration_iter;
    const Matrix grad = tsne_gradient(pj, y, early ? p.early_exaggeration : 1.0);
    if (it == 0) e.grad_norm_initial = grad.norm();
    e.grad_norm_final = grad.norm();
    e.grad_norm_peak = std::max(e.grad_norm_peak, e.grad_norm_final);
    const double momentum = early ? 0.5 : 0.8;
    for (Index i = 0; i < y.size(); ++i) {
      const bool same = (grad.data()[i] > 0) == (update.data()[i] > 0);
      gains.data()[i] = std::max(same ? gains.data()[i] * 0.8 : gains.data()[i] + 0.2, 0.01);
    }
    update = momentum * update - p.learning_rate * gains.cwiseProduct(grad);
    y += update;
    y.rowwise() -= y.colwise().mean();
  }
  e.coords = std::move(y);
  return e;
}

}  // namespace

std::string_view algo_name(Algo algo) noexcept {
  switch (algo) {
    case Algo::LLE: return "lle";
    case Algo::Spectral: return "spectral";
    case Algo::MDS: return "mds";
    case Algo::Isomap: return "isomap";
    case Algo::TSNE: return "tsne";
  }
  return "?";
}

std::optional<Algo> parse_algo(std::string_view name) noexcept {
  std::string lower(name);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (auto a : kAllAlgos)
    if (algo_name(a) == lower) return a;
  return std::nullopt;
}

Embedding embed(Algo algo, const Matrix& x, int d, std::uint64_t seed, const Params& params) {
  require_finite(x, "embed");
  const auto n = x.rows();
  if (d < 1 || d >= x.cols() || d >= n) {
    throw Error(Errc::InvalidArgument,
                fmt::format("embed: dimension {} must be in [1, min(cols {}, rows {}))", d, x.cols(), n));
  }
  const bool neighbor_based = algo == Algo::LLE || algo == Algo::Spectral || algo == Algo::Isomap;
  if (neighbor_based && n <= params.n_neighbors) {
    throw Error(Errc::TooFewRows, fmt::format("embed: {} rows for {} neighbors", n, params.n_neighbors));
  }
  Embedding e;
  switch (algo) {
    case Algo::LLE: e = lle(x, d, params); break;
    case Algo::Spectral: e = spectral(x, d, params); break;
    case Algo::MDS: e = mds(x, d, seed, params); break;
    case Algo::Isomap: e = isomap(x, d, params); break;
    case Algo::TSNE: e = tsne(x, d, seed, params); break;
  }
  if (algo != Algo::MDS && algo != Algo::TSNE) fix_signs(e.coords);
  if (e.disconnected_graph) spdlog::warn("{}: neighbor graph was disconnected; bridged", algo_name(algo));
  if (!e.coords.allFinite()) throw Error(Errc::NonFiniteFeature, fmt::format("{}: non-finite coordinates", algo_name(algo)));
  e.algo = algo;
  e.params = params;
  e.seed = seed;
  return e;
}

double stress(const Matrix& x_high, const Matrix& y_low) {
  if (x_high.rows() != y_low.rows()) {
    throw Error(Errc::ShapeMismatch, fmt::format("stress: {} vs {} rows", x_high.rows(), y_low.rows()));
  }
  double s = 0.0;
  for (Index i = 0; i < x_high.rows(); ++i) {
    for (Index j = i + 1; j < x_high.rows(); ++j) {
      const double diff = (y_low.row(i) - y_low.row(j)).norm() - (x_high.row(i) - x_high.row(j)).norm();
      s += diff * diff;
    }
  }
  return std::sqrt(2.0 * s);  // ordered pairs count each unordered pair twice
}

Matrix extend(const Matrix& train_x, const Matrix& train_coords, const Matrix& new_x, int k, double reg) {
  if (train_x.rows() != train_coords.rows()) throw Error(Errc::ShapeMismatch, "extend: training rows differ");
  if (train_x.cols() != new_x.cols()) throw Error(Errc::ColumnMismatch, "extend: feature columns differ");
  if (train_x.rows() == 0) throw Error(Errc::TooFewRows, "extend: empty training set");
  const auto kk = static_cast<std::size_t>(std::clamp<Index>(k, 1, train_x.rows()));
  Matrix out(new_x.rows(), train_coords.cols());
  std::vector<detail::Neighbor> cand;
  for (Index i = 0; i < new_x.rows(); ++i) {
    cand.clear();
    for (Index j = 0; j < train_x.rows(); ++j)
      cand.push_back({static_cast<std::size_t>(j), (train_x.row(j) - new_x.row(i)).norm()});
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), cand.end(),
                      [](const auto& a, const auto& b) { return a.dist < b.dist || (a.dist == b.dist && a.index < b.index); });
    cand.resize(kk);
    const Vector w = barycentric(new_x.row(i), gather(train_x, cand), reg);
    out.row(i) = w.transpose() * gather(train_coords, cand);
  }
  return out;
}

Matrix lle_weights(const Matrix& x, int k, double reg, bool* bridged) {
  const auto g = detail::connected_knn_graph(x, k);
  if (bridged) *bridged = g.bridges > 0;
  const auto n = x.rows();
  Matrix w = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const auto& nbrs = g.lists[static_cast<std::size_t>(i)];
    const Vector wi = barycentric(x.row(i), gather(x, nbrs), reg);
    for (std::size_t j = 0; j < nbrs.size(); ++j) w(i, static_cast<Index>(nbrs[j].index)) += wi(static_cast<Index>(j));
  }
  return w;
}

Matrix geodesic_distances(const Matrix& x, int k, bool* bridged) {
  const auto g = detail::connected_knn_graph(x, k);
  if (bridged) *bridged = g.bridges > 0;
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::vector<detail::Neighbor>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& nb : g.lists[i]) {
      adj[i].push_back(nb);
      adj[nb.index].push_back({i, nb.dist});
    }
  }
  const double inf = std::numeric_limits<double>::infinity();
  Matrix dist(x.rows(), x.rows());
  using Item = std::pair<double, std::size_t>;
  std::vector<double> d(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(d.begin(), d.end(), inf);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    d[s] = 0.0;
    pq.push({0.0, s});
    while (!pq.empty()) {
      const auto [du, u] = pq.top();
      pq.pop();
      if (du > d[u]) continue;
      for (const auto& e : adj[u]) {
        if (du + e.dist < d[e.index]) {
          d[e.index] = du + e.dist;
          pq.push({d[e.index], e.index});
        }
      }
    }
    for (std::size_t t = 0; t < n; ++t) dist(static_cast<Index>(s), static_cast<Index>(t)) = d[t];
  }
  // the two Dijkstra directions can differ in the last bit; symmetrize
  return (dist + dist.transpose()) / 2.0;
}

Matrix classical_mds(const Matrix& distances, int d) {
  const auto n = distances.rows();
  if (distances.cols() != n) throw Error(Errc::ShapeMismatch, "classical_mds: distance matrix is not square");
  if (d < 1 || d > n) throw Error(Errc::InvalidArgument, "classical_mds: bad dimension");
  Matrix b = distances.array().square().matrix();
  const Vector row_mean = b.rowwise().mean();
  const Vector col_mean = b.colwise().mean().transpose();
  const double all = b.mean();
  b = -0.5 * ((b.colwise() - row_mean).rowwise() - col_mean.transpose()).array() - 0.5 * all;
  Eigen::SelfAdjointEigenSolver<Matrix> es(b);
  if (es.info() != Eigen::Success) throw Error(Errc::DegenerateMatrix, "classical_mds: eigendecomposition failed");
  // eigenvalues ascend; take the top d
  Matrix y(n, d);
  for (int c = 0; c < d; ++c) {
    const Index src = n - 1 - c;
    y.col(c) = es.eigenvectors().col(src) * std::sqrt(std::max(es.eigenvalues()(src), 0.0));
  }
  fix_signs(y);
  return y;
}

SmacofResult smacof(const Matrix& delta, Matrix y, int max_iter, double tol) {
  const auto n = delta.rows();
  if (delta.cols() != n || y.rows() != n) throw Error(Errc::ShapeMismatch, "smacof: shape mismatch");
  auto raw = [&](const Matrix& dy) { return (dy - delta).squaredNorm() / 2.0; };
  SmacofResult r;
  Matrix dy = detail::pairwise_distances(y);
  double prev = raw(dy);
  for (int it = 0; it < max_iter; ++it) {
    // Guttman transform y <- B(y) y / n
    Matrix b(n, n);
    for (Index i = 0; i < n; ++i) {
      double diag = 0.0;
      for (Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double v = dy(i, j) > 0 ? -delta(i, j) / dy(i, j) : 0.0;
        b(i, j) = v;
        diag -= v;
      }
      b(i, i) = diag;
    }
    y = b * y / static_cast<double>(n);
    dy = detail::pairwise_distances(y);
    const double cur = raw(dy);
    r.trace.push_back(std::sqrt(2.0 * cur));
    const bool done = cur <= 0 || (prev - cur) < tol * prev;
    prev = cur;
    if (done) break;
  }
  r.y = std::move(y);
  return r;
}

Affinities tsne_affinities(const Matrix& x, double perplexity) {
  require_finite(x, "tsne");
  const auto n = x.rows();
  if (!(perplexity > 0) || perplexity >= static_cast<double>(n - 1)) {
    throw Error(Errc::PerplexityTooLarge,
                fmt::format("tsne: perplexity {} needs more than {} rows", perplexity, perplexity + 1));
  }
  Matrix d2(n, n);
  for (Index i = 0; i < n; ++i) {
    d2(i, i) = 0.0;
    for (Index j = i + 1; j < n; ++j) d2(i, j) = d2(j, i) = (x.row(i) - x.row(j)).squaredNorm();
  }
  const double target = std::log(perplexity);
  Matrix cond = Matrix::Zero(n, n);
  Affinities a;
  a.row_perplexity.resize(n);
  Vector row(n);
  for (Index i = 0; i < n; ++i) {
    // bisection on the precision beta for entropy log(perplexity)
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double entropy = 0.0;
    double dmin = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, d2(i, j));
    for (int step = 0; step < 200; ++step) {
      double sum = 0.0, weighted = 0.0;
      for (Index j = 0; j < n; ++j) {
        // shifted by dmin for range; cancels in the normalization
        row(j) = j == i ? 0.0 : std::exp(-beta * (d2(i, j) - dmin));
        sum += row(j);
        weighted += row(j) * (d2(i, j) - dmin);
      }
      entropy = std::log(sum) + beta * weighted / sum;
      row /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-8) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
    }
    cond.row(i) = row.transpose();
    a.row_perplexity(i) = std::exp(entropy);
  }
  a.p = (cond + cond.transpose()) / (2.0 * static_cast<double>(n));
  return a;
}

}  // namespace cpfusion::manifold
