#include "cpfusion/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cpfusion/rng.hpp"
#include "neighbors.hpp"

namespace cpfusion::cluster {

namespace {

void check_k(const Matrix& x, int k) {
  if (k < 2 || k > x.rows()) {
    throw Error(Errc::KOutOfRange, fmt::format("k = {} outside [2, {}]", k, x.rows()));
  }
}

double inertia_of(const Matrix& x, const std::vector<int>& labels, int k) {
  Matrix c = Matrix::Zero(k, x.cols());
  Vector n = Vector::Zero(k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    c.row(labels[i]) += x.row(static_cast<Eigen::Index>(i));
    n(labels[i]) += 1;
  }
  for (int j = 0; j < k; ++j) {
    if (n(j) > 0) c.row(j) /= n(j);
  }
  double s = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) s += (x.row(static_cast<Eigen::Index>(i)) - c.row(labels[i])).squaredNorm();
  return s;
}

/// Relabels ids by first appearance so equal partitions print equally.
int compact_labels(std::vector<int>& labels) {
  std::map<int, int> remap;
  for (auto& l : labels) {
    const auto [it, inserted] = remap.emplace(l, static_cast<int>(remap.size()));
    l = it->second;
  }
  return static_cast<int>(remap.size());
}

// ------------------------------------------------------------------ k-means

struct KMeansRun {
  std::vector<int> labels;
  Matrix centers;
  double inertia = std::numeric_limits<double>::infinity();
  std::vector<double> trace;
};

Matrix kmeanspp(const Matrix& x, int k, Rng& rng) {
  const auto n = x.rows();
  Matrix centers(k, x.cols());
  centers.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Vector d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0) {
      double r = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2(i);
        if (r < 0 && d2(i) > 0) {
          pick = i;
          break;
        }
      }
      // rounding can leave r >= 0; fall back to the last positive weight
      if (d2(pick) <= 0) {
        for (Eigen::Index i = n - 1; i >= 0; --i) {
          if (d2(i) > 0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centers.row(c) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

KMeansRun lloyd(const Matrix& x, int k, Rng& rng, const Options& opt, double tol_abs) {
  KMeansRun run;
  run.centers = kmeanspp(x, k, rng);
  const auto n = x.rows();
  run.labels.assign(static_cast<std::size_t>(n), 0);
  Vector dist(n);
  for (int it = 0; it < opt.max_iter; ++it) {
    double inertia = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(i) - run.centers.row(c)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      run.labels[static_cast<std::size_t>(i)] = best;
      dist(i) = bd;
      inertia += bd;
    }
    run.trace.push_back(inertia);
    run.inertia = inertia;

    Matrix next = Matrix::Zero(k, x.cols());
    Vector count = Vector::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(run.labels[static_cast<std::size_t>(i)]) += x.row(i);
      count(run.labels[static_cast<std::size_t>(i)]) += 1;
    }
    for (int c = 0; c < k; ++c) {
      if (count(c) > 0) {
        next.row(c) /= count(c);
        continue;
      }
      // empty cluster: take the point farthest from its center
      Eigen::Index far = 0;
      dist.maxCoeff(&far);
      next.row(c) = x.row(far);
      dist(far) = 0;
    }
    const double shift = (next - run.centers).squaredNorm();
    run.centers = std::move(next);
    if (shift <= tol_abs) {
      // final assignment against the converged centers
      double final_inertia = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          const double d = (x.row(i) - run.centers.row(c)).squaredNorm();
          if (d < bd) {
            bd = d;
            best = c;
          }
        }
        run.labels[static_cast<std::size_t>(i)] = best;
        final_inertia += bd;
      }
      run.trace.push_back(final_inertia);
      run.inertia = final_inertia;
      break;
    }
  }
  return run;
}

KMeansRun kmeans_best(const Matrix& x, int k, std::uint64_t seed, const Options& opt) {
  const Vector var = (x.rowwise() - x.colwise().mean()).array().square().colwise().mean();
  const double tol_abs = opt.tol * (var.size() > 0 ? var.mean() : 0.0);
  KMeansRun best;
  for (int r = 0; r < std::max(1, opt.n_init); ++r) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    auto run = lloyd(x, k, rng, opt, tol_abs);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

// ------------------------------------------------------------ agglomerative

struct Merge {
  int a, b;
  double height;
};

// Nearest-neighbor chain over a dense dissimilarity matrix with
// Lance-Williams updates; valid for the reducible Ward and average linkages.
std::vector<Merge> nn_chain(const Matrix& x, const std::vector<double>& w, Linkage linkage) {
  const auto n = static_cast<int>(x.rows());
  Matrix d(n, n);
  for (int i = 0; i < n; ++i) {
    d(i, i) = 0;
    for (int j = i + 1; j < n; ++j) {
      const double sq = (x.row(i) - x.row(j)).squaredNorm();
      const double v = linkage == Linkage::Ward ? (w[i] * w[j] / (w[i] + w[j])) * sq : std::sqrt(sq);
      d(i, j) = d(j, i) = v;
    }
  }
  std::vector<double> size(w);
  std::vector<char> active(static_cast<std::size_t>(n), 1);
  std::vector<int> chain;
  std::vector<Merge> merges;
  merges.reserve(static_cast<std::size_t>(std::max(0, n - 1)));
  int lowest_active = 0;
  while (static_cast<int>(merges.size()) < n - 1) {
    if (chain.empty()) {
      while (!active[static_cast<std::size_t>(lowest_active)]) ++lowest_active;
      chain.push_back(lowest_active);
    }
    const int a = chain.back();
    const int prev = chain.size() >= 2 ? chain[chain.size() - 2] : -1;
    int b = -1;
    double bd = std::numeric_limits<double>::infinity();
    if (prev >= 0) {
      b = prev;
      bd = d(a, prev);
    }
    for (int c = 0; c < n; ++c) {
      if (c == a || !active[static_cast<std::size_t>(c)]) continue;
      if (d(a, c) < bd) {
        bd = d(a, c);
        b = c;
      }
    }
    if (b != prev) {
      chain.push_back(b);
      continue;
    }
    chain.pop_back();
    chain.pop_back();
    const int keep = std::min(a, b), drop = std::max(a, b);
    const double height = linkage == Linkage::Ward ? std::sqrt(2.0 * bd) : bd;
    merges.push_back({keep, drop, height});
    const double na = size[static_cast<std::size_t>(keep)], nb = size[static_cast<std::size_t>(drop)];
    for (int c = 0; c < n; ++c) {
      if (!active[static_cast<std::size_t>(c)] || c == keep || c == drop) continue;
      const double nc = size[static_cast<std::size_t>(c)];
      double v;
      if (linkage == Linkage::Ward) {
        v = ((na + nc) * d(c, keep) + (nb + nc) * d(c, drop) - nc * d(keep, drop)) / (na + nb + nc);
      } else {
        v = (na * d(c, keep) + nb * d(c, drop)) / (na + nb);
      }
      d(c, keep) = d(keep, c) = v;
    }
    size[static_cast<std::size_t>(keep)] = na + nb;
    active[static_cast<std::size_t>(drop)] = 0;
  }
  std::stable_sort(merges.begin(), merges.end(), [](const Merge& p, const Merge& q) { return p.height < q.height; });
  return merges;
}

int find_root(std::vector<int>& parent, int i) {
  while (parent[static_cast<std::size_t>(i)] != i) {
    parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
    i = parent[static_cast<std::size_t>(i)];
  }
  return i;
}

std::vector<int> cut_tree(const std::vector<Merge>& merges, int n, int k) {
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  for (int m = 0; m < n - k; ++m) {
    const int ra = find_root(parent, merges[static_cast<std::size_t>(m)].a);
    const int rb = find_root(parent, merges[static_cast<std::size_t>(m)].b);
    parent[static_cast<std::size_t>(std::max(ra, rb))] = std::min(ra, rb);
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = find_root(parent, i);
  compact_labels(labels);
  return labels;
}

ClusterResult from_dendrogram(const Matrix& x, const std::vector<Merge>& merges, int k) {
  ClusterResult r;
  const auto n = static_cast<int>(x.rows());
  r.labels = cut_tree(merges, n, k);
  r.k = k;
  r.inertia = inertia_of(x, r.labels, k);
  for (const auto& m : merges) r.trace.push_back(m.height);
  return r;
}

// ------------------------------------------------------------------ spectral

struct SpectralBasis {
  Matrix vectors;  // eigenvectors of the normalized Laplacian, ascending
  bool disconnected = false;
};

SpectralBasis spectral_basis(const Matrix& x, int max_k, int n_neighbors) {
  const auto n = x.rows();
  const auto graph = detail::knn_graph(x, std::min<int>(n_neighbors, static_cast<int>(n) - 1));
  Matrix a = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (const auto& nb : graph[static_cast<std::size_t>(i)]) {
      a(i, static_cast<Eigen::Index>(nb.index)) = 1.0;
      a(static_cast<Eigen::Index>(nb.index), i) = 1.0;
    }
  }
  SpectralBasis out;
  out.disconnected = detail::component_count(a) > 1;
  if (out.disconnected) {
    spdlog::warn("spectral: neighbor graph is disconnected; adding 1e-8 full connectivity");
    a.array() += 1e-8;
    a.diagonal().setZero();
  }
  const Vector deg = a.rowwise().sum();
  const Vector inv_sqrt = deg.array().max(1e-300).rsqrt();
  Matrix l = -(inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal());
  l.diagonal().array() += 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(l);
  out.vectors = es.eigenvectors().leftCols(std::min<Eigen::Index>(max_k, n));
  // deterministic sign: largest-|entry| positive
  for (Eigen::Index c = 0; c < out.vectors.cols(); ++c) {
    Eigen::Index arg = 0;
    out.vectors.col(c).cwiseAbs().maxCoeff(&arg);
    if (out.vectors(arg, c) < 0) out.vectors.col(c) *= -1.0;
  }
  return out;
}

ClusterResult spectral_from_basis(const Matrix& x, const SpectralBasis& basis, int k, std::uint64_t seed,
                                  const Options& opt) {
  const Matrix emb = row_normalize(basis.vectors.leftCols(k));
  auto run = kmeans_best(emb, k, seed, opt);
  ClusterResult r;
  r.labels = std::move(run.labels);
  r.k = compact_labels(r.labels);
  r.inertia = inertia_of(x, r.labels, r.k);
  r.trace = std::move(run.trace);
  r.seed = seed;
  r.disconnected_graph = basis.disconnected;
  return r;
}

// --------------------------------------------------------------------- BIRCH

struct Cf {
  double n = 0;
  Vector ls;
  double ss = 0;

  Vector centroid() const { return ls / n; }
  void add(const Cf& o) {
    n += o.n;
    ls += o.ls;
    ss += o.ss;
  }
  double radius_with(const Cf& o) const {
    const double nn = n + o.n;
    const Vector c = (ls + o.ls) / nn;
    return std::sqrt(std::max(0.0, (ss + o.ss) / nn - c.squaredNorm()));
  }
};

struct CfNode {
  bool leaf = true;
  std::vector<Cf> entries;
  std::vector<int> children;  // parallel to entries on inner nodes
};

class CfTree {
 public:
  CfTree(double threshold, int branching, Eigen::Index dim) : threshold_(threshold), branching_(branching), dim_(dim) {
    nodes_.emplace_back();
  }

  void insert(const Vector& x) {
    Cf point{1.0, x, x.squaredNorm()};
    auto split = insert_at(root_, point);
    if (split) {
      // grow a new root over the two halves
      CfNode r;
      r.leaf = false;
      r.entries = {summary(root_), summary(*split)};
      r.children = {root_, *split};
      nodes_.push_back(std::move(r));
      root_ = static_cast<int>(nodes_.size()) - 1;
    }
  }

  std::vector<Cf> leaf_entries() const {
    std::vector<Cf> out;
    collect(root_, out);
    return out;
  }

 private:
  double threshold_;
  int branching_;
  Eigen::Index dim_;
  std::vector<CfNode> nodes_;
  int root_ = 0;

  Cf summary(int node) const {
    Cf s{0, Vector::Zero(dim_), 0};
    for (const auto& e : nodes_[static_cast<std::size_t>(node)].entries) s.add(e);
    return s;
  }

  static std::size_t closest(const std::vector<Cf>& entries, const Vector& c) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const double d = (entries[i].centroid() - c).squaredNorm();
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    return best;
  }

  // Returns the index of a new sibling node when `node` had to split.
  std::optional<int> insert_at(int node, const Cf& point) {
    auto* nd = &nodes_[static_cast<std::size_t>(node)];
    if (nd->leaf) {
      if (!nd->entries.empty()) {
        const auto i = closest(nd->entries, point.centroid());
        if (nd->entries[i].radius_with(point) <= threshold_) {
          nd->entries[i].add(point);
          return std::nullopt;
        }
      }
      nd->entries.push_back(point);
    } else {
      const auto i = closest(nd->entries, point.centroid());
      const int child = nd->children[i];
      const auto split = insert_at(child, point);
      nd = &nodes_[static_cast<std::size_t>(node)];  // nodes_ may have grown
      nd->entries[i] = summary(child);
      if (split) {
        nd->entries.push_back(summary(*split));
        nd->children.push_back(*split);
      }
    }
    if (static_cast<int>(nd->entries.size()) <= branching_) return std::nullopt;
    return split_node(node);
  }

  int split_node(int node) {
    CfNode old = std::move(nodes_[static_cast<std::size_t>(node)]);
    const auto m = old.entries.size();
    // farthest pair of entry centroids seeds the two halves
    std::size_t s1 = 0, s2 = 1;
    double far = -1;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        const double d = (old.entries[i].centroid() - old.entries[j].centroid()).squaredNorm();
        if (d > far) {
          far = d;
          s1 = i;
          s2 = j;
        }
      }
    }
    CfNode a, b;
    a.leaf = b.leaf = old.leaf;
    const Vector c1 = old.entries[s1].centroid(), c2 = old.entries[s2].centroid();
    for (std::size_t i = 0; i < m; ++i) {
      const Vector c = old.entries[i].centroid();
      const bool to_a = i == s1 || (i != s2 && (c - c1).squaredNorm() <= (c - c2).squaredNorm());
      auto& dst = to_a ? a : b;
      dst.entries.push_back(old.entries[i]);
      if (!old.leaf) dst.children.push_back(old.children[i]);
    }
    nodes_[static_cast<std::size_t>(node)] = std::move(a);
    nodes_.push_back(std::move(b));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void collect(int node, std::vector<Cf>& out) const {
    const auto& nd = nodes_[static_cast<std::size_t>(node)];
    if (nd.leaf) {
      out.insert(out.end(), nd.entries.begin(), nd.entries.end());
      return;
    }
    for (int c : nd.children) collect(c, out);
  }
};

struct BirchState {
  Matrix centroids;
  std::vector<double> weights;
  std::vector<int> nearest;  // per point: subcluster index
  std::vector<Merge> merges;
};

BirchState birch_state(const Matrix& x, const Options& opt) {
  CfTree tree(opt.birch_threshold, opt.birch_branching, x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) tree.insert(x.row(i).transpose());
  const auto leaves = tree.leaf_entries();
  BirchState s;
  s.centroids.resize(static_cast<Eigen::Index>(leaves.size()), x.cols());
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    s.centroids.row(static_cast<Eigen::Index>(i)) = leaves[i].centroid().transpose();
    s.weights.push_back(leaves[i].n);
  }
  s.nearest.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    (s.centroids.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
    s.nearest[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  s.merges = nn_chain(s.centroids, s.weights, opt.linkage);
  return s;
}

ClusterResult birch_cut(const Matrix& x, const BirchState& s, int k) {
  ClusterResult r;
  const int m = static_cast<int>(s.centroids.rows());
  const int kk = std::min(k, m);
  const auto sub = cut_tree(s.merges, m, kk);
  r.labels.resize(s.nearest.size());
  for (std::size_t i = 0; i < s.nearest.size(); ++i) r.labels[i] = sub[static_cast<std::size_t>(s.nearest[i])];
  r.k = compact_labels(r.labels);
  r.reduced_k = r.k < k;
  if (r.reduced_k) spdlog::warn("BIRCH: {} clusters requested, {} non-empty", k, r.k);
  r.inertia = inertia_of(x, r.labels, r.k);
  for (const auto& mg : s.merges) r.trace.push_back(mg.height);
  return r;
}

ClusterResult kmeans_result(const Matrix& x, int k, std::uint64_t seed, const Options& opt) {
  auto run = kmeans_best(x, k, seed, opt);
  ClusterResult r;
  r.labels = std::move(run.labels);
  r.k = k;
  r.inertia = run.inertia;
  r.trace = std::move(run.trace);
  r.seed = seed;
  return r;
}

}  // namespace

std::string_view algo_name(Algo algo) noexcept {
  switch (algo) {
    case Algo::KMeans: return "kmeans";
    case Algo::Agglomerative: return "agglomerative";
    case Algo::Spectral: return "spectral";
    case Algo::Birch: return "birch";
  }
  return "?";
}

std::optional<Algo> parse_algo(std::string_view name) noexcept {
  for (auto a : kAllAlgos) {
    if (algo_name(a) == name) return a;
  }
  return std::nullopt;
}

Matrix row_normalize(const Matrix& x) {
  Matrix out = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (n > 0) out.row(i) /= n;
  }
  return out;
}

ClusterResult kmeans(const Matrix& x, int k, std::uint64_t seed, const Options& opt) {
  check_k(x, k);
  return kmeans_result(x, k, seed, opt);
}

ClusterResult agglomerative(const Matrix& x, int k, Linkage linkage, const std::vector<double>& weights) {
  check_k(x, k);
  std::vector<double> w = weights.empty() ? std::vector<double>(static_cast<std::size_t>(x.rows()), 1.0) : weights;
  if (w.size() != static_cast<std::size_t>(x.rows())) throw Error(Errc::LengthMismatch, "one weight per row");
  return from_dendrogram(x, nn_chain(x, w, linkage), k);
}

std::vector<ClusterResult> cluster_sweep(Algo algo, const Matrix& x, const std::vector<int>& ks, std::uint64_t seed,
                                         const Options& opt) {
  for (int k : ks) check_k(x, k);
  std::vector<ClusterResult> out;
  if (ks.empty()) return out;
  switch (algo) {
    case Algo::KMeans:
      for (int k : ks) out.push_back(kmeans_result(x, k, seed, opt));
      break;
    case Algo::Agglomerative: {
      const auto merges = nn_chain(x, std::vector<double>(static_cast<std::size_t>(x.rows()), 1.0), opt.linkage);
      for (int k : ks) out.push_back(from_dendrogram(x, merges, k));
      break;
    }
    case Algo::Spectral: {
      const auto basis = spectral_basis(x, *std::max_element(ks.begin(), ks.end()), opt.n_neighbors);
      for (int k : ks) out.push_back(spectral_from_basis(x, basis, k, seed, opt));
      break;
    }
    case Algo::Birch: {
      const auto state = birch_state(x, opt);
      for (int k : ks) out.push_back(birch_cut(x, state, k));
      break;
    }
  }
  for (auto& r : out) r.seed = seed;
  return out;
}

ClusterResult cluster(Algo algo, const Matrix& x, int k, std::uint64_t seed, const Options& opt) {
  return cluster_sweep(algo, x, {k}, seed, opt).front();
}

// ------------------------------------------------------------------- quality

namespace {

int validate_labels(const Matrix& x, const std::vector<int>& labels) {
  if (labels.size() != static_cast<std::size_t>(x.rows())) {
    throw Error(Errc::LengthMismatch, fmt::format("{} labels for {} rows", labels.size(), x.rows()));
  }
  int k = 0;
  for (int l : labels) {
    if (l < 0) throw Error(Errc::InvalidArgument, "negative cluster id");
    k = std::max(k, l + 1);
  }
  std::vector<char> seen(static_cast<std::size_t>(k), 0);
  for (int l : labels) seen[static_cast<std::size_t>(l)] = 1;
  if (std::count(seen.begin(), seen.end(), 1) < 2) throw Error(Errc::SingleCluster, "need at least two clusters");
  return k;
}

struct Centroids {
  Matrix c;
  Vector n;
};

Centroids centroids_of(const Matrix& x, const std::vector<int>& labels, int k) {
  Centroids out{Matrix::Zero(k, x.cols()), Vector::Zero(k)};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.c.row(labels[i]) += x.row(static_cast<Eigen::Index>(i));
    out.n(labels[i]) += 1;
  }
  for (int j = 0; j < k; ++j) {
    if (out.n(j) > 0) out.c.row(j) /= out.n(j);
  }
  return out;
}

}  // namespace

double silhouette(const Matrix& x, const std::vector<int>& labels) {
  const int k = validate_labels(x, labels);
  const auto n = x.rows();
  std::vector<double> count(static_cast<std::size_t>(k), 0.0);
  for (int l : labels) count[static_cast<std::size_t>(l)] += 1;
  double total = 0;
  std::vector<double> sum(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(sum.begin(), sum.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) sum[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])] += (x.row(i) - x.row(j)).norm();
    }
    const auto own = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
    if (count[own] <= 1) continue;  // singleton: 0
    const double a = sum[own] / (count[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sum.size(); ++c) {
      if (c != own && count[c] > 0) b = std::min(b, sum[c] / count[c]);
    }
    const double m = std::max(a, b);
    if (m > 0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

double calinski_harabasz(const Matrix& x, const std::vector<int>& labels) {
  const int k = validate_labels(x, labels);
  const auto cen = centroids_of(x, labels, k);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  double between = 0, within = 0;
  int used = 0;
  for (int j = 0; j < k; ++j) {
    if (cen.n(j) == 0) continue;
    ++used;
    between += cen.n(j) * (cen.c.row(j) - mean).squaredNorm();
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    within += (x.row(static_cast<Eigen::Index>(i)) - cen.c.row(labels[i])).squaredNorm();
  }
  const auto n = static_cast<double>(x.rows());
  if (within == 0) return 1.0;
  return between * (n - used) / (within * (used - 1));
}

double davies_bouldin(const Matrix& x, const std::vector<int>& labels) {
  const int k = validate_labels(x, labels);
  const auto cen = centroids_of(x, labels, k);
  Vector s = Vector::Zero(k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    s(labels[i]) += (x.row(static_cast<Eigen::Index>(i)) - cen.c.row(labels[i])).norm();
  }
  std::vector<int> used;
  for (int j = 0; j < k; ++j) {
    if (cen.n(j) > 0) {
      s(j) /= cen.n(j);
      used.push_back(j);
    }
  }
  double total = 0;
  for (int a : used) {
    double worst = 0;
    for (int b : used) {
      if (a == b) continue;
      const double d = (cen.c.row(a) - cen.c.row(b)).norm();
      const double r = d > 0 ? (s(a) + s(b)) / d : std::numeric_limits<double>::infinity();
      worst = std::max(worst, r);
    }
    total += worst;
  }
  return total / static_cast<double>(used.size());
}

Quality cluster_quality(const Matrix& x, const std::vector<int>& labels) {
  return {silhouette(x, labels), calinski_harabasz(x, labels), davies_bouldin(x, labels)};
}

double adjusted_rand(const std::vector<int>& truth, const std::vector<int>& labels) {
  if (truth.size() != labels.size()) {
    throw Error(Errc::LengthMismatch, fmt::format("{} vs {} labels", truth.size(), labels.size()));
  }
  using I = __int128;
  auto pairs = [](std::int64_t m) -> I { return static_cast<I>(m) * (m - 1) / 2; };
  std::map<std::pair<int, int>, std::int64_t> cells;
  std::map<int, std::int64_t> rows, cols;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++cells[{truth[i], labels[i]}];
    ++rows[truth[i]];
    ++cols[labels[i]];
  }
  I index = 0, a = 0, b = 0;
  for (const auto& [key, m] : cells) index += pairs(m);
  for (const auto& [key, m] : rows) a += pairs(m);
  for (const auto& [key, m] : cols) b += pairs(m);
  const I total = pairs(static_cast<std::int64_t>(truth.size()));
  // (index - a b / T) / ((a + b) / 2 - a b / T), scaled by 2T to stay integral
  const I num = 2 * (index * total - a * b);
  const I den = (a + b) * total - 2 * a * b;
  if (den == 0) return 1.0;
  return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
}

double adjusted_rand(const std::vector<std::string>& truth, const std::vector<int>& labels) {
  std::map<std::string, int> ids;
  std::vector<int> t;
  t.reserve(truth.size());
  for (const auto& s : truth) t.push_back(ids.emplace(s, static_cast<int>(ids.size())).first->second);
  return adjusted_rand(t, labels);
}

RobustnessStats robustness_stats(std::span<const double> series) {
  if (series.empty()) throw Error(Errc::TooFewRows, "empty metric series");
  RobustnessStats r;
  const auto n = static_cast<double>(series.size());
  for (double v : series) r.mean += v;
  r.mean /= n;
  if (series.size() > 1) {
    for (double v : series) r.variance += (v - r.mean) * (v - r.mean);
    r.variance /= n - 1;
  }
  if (r.mean == 0.0) {
    r.zero_mean = true;
    r.nvar = std::numeric_limits<double>::quiet_NaN();
  } else {
    r.nvar = std::sqrt(r.variance) / std::abs(r.mean);
  }
  return r;
}

}  // namespace cpfusion::cluster
