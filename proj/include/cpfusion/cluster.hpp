#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpfusion/common.hpp"

// Clustering (k-means, agglomerative, spectral, BIRCH), validity indices and
// robustness statistics.
namespace cpfusion::cluster {

enum class Algo { KMeans, Agglomerative, Spectral, Birch };
std::string_view algo_name(Algo algo) noexcept;
std::optional<Algo> parse_algo(std::string_view name) noexcept;
inline constexpr Algo kAllAlgos[] = {Algo::KMeans, Algo::Agglomerative, Algo::Spectral, Algo::Birch};

enum class Linkage { Ward, Average };

struct Options {
  int n_init = 10;
  int max_iter = 300;
  double tol = 1e-4;  // relative to the mean per-feature variance
  int n_neighbors = 10;
  Linkage linkage = Linkage::Ward;
  double birch_threshold = 0.5;
  int birch_branching = 50;
};

struct ClusterResult {
  std::vector<int> labels;  // ids in [0, k)
  int k = 0;
  /// Sum of squared distances to cluster means, in input space.
  double inertia = 0.0;
  /// k-means: inertia after each assignment step of the kept restart
  /// (spectral: of the embedding k-means); agglomerative: merge heights in
  /// ascending order; BIRCH: heights of the global step.
  std::vector<double> trace;
  std::uint64_t seed = 0;
  /// Spectral: the neighbor graph was disconnected and eps-connected.
  bool disconnected_graph = false;
  /// BIRCH: fewer non-empty clusters than requested.
  bool reduced_k = false;
};

/// Throws Error{KOutOfRange} unless 2 <= k <= rows.
ClusterResult cluster(Algo algo, const Matrix& x, int k, std::uint64_t seed, const Options& opt = {});

/// Same results as calling `cluster` per k, sharing the expensive
/// k-independent work (eigendecomposition, dendrogram, CF-tree).
std::vector<ClusterResult> cluster_sweep(Algo algo, const Matrix& x, const std::vector<int>& ks, std::uint64_t seed,
                                         const Options& opt = {});

/// k-means++ seeding, Lloyd iterations, best of `opt.n_init` restarts.
ClusterResult kmeans(const Matrix& x, int k, std::uint64_t seed, const Options& opt = {});

/// Merge heights and cluster labels for reducible linkages via the
/// nearest-neighbor chain; `weights` are point multiplicities.
ClusterResult agglomerative(const Matrix& x, int k, Linkage linkage = Linkage::Ward,
                            const std::vector<double>& weights = {});

/// Rows scaled to unit Euclidean norm; zero rows stay zero.
Matrix row_normalize(const Matrix& x);

// ----------------------------------------------------------------- quality

struct Quality {
  double silhouette = 0.0;
  double calinski_harabasz = 0.0;
  double davies_bouldin = 0.0;
};

/// Throws Error{SingleCluster} below two distinct labels,
/// Error{LengthMismatch} on size mismatch.
Quality cluster_quality(const Matrix& x, const std::vector<int>& labels);
double silhouette(const Matrix& x, const std::vector<int>& labels);
double calinski_harabasz(const Matrix& x, const std::vector<int>& labels);
double davies_bouldin(const Matrix& x, const std::vector<int>& labels);

/// Pair-counting ARI; 1 when both partitions are trivial in the same way.
double adjusted_rand(const std::vector<int>& truth, const std::vector<int>& labels);
double adjusted_rand(const std::vector<std::string>& truth, const std::vector<int>& labels);

// -------------------------------------------------------------- robustness

struct RobustnessStats {
  double mean = 0.0;
  double variance = 0.0;  // sample variance (n - 1); 0 for one value
  double nvar = 0.0;      // sd / |mean|
  bool zero_mean = false; // nvar undefined, reported as NaN
};

/// Throws Error{TooFewRows} on an empty series.
RobustnessStats robustness_stats(std::span<const double> series);

}  // namespace cpfusion::cluster
