#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "cpfusion/common.hpp"

// Nonlinear embeddings used as classifier front-ends, and the metric stress.
namespace cpfusion::manifold {

enum class Algo { LLE, Spectral, MDS, Isomap, TSNE };
std::string_view algo_name(Algo algo) noexcept;
std::optional<Algo> parse_algo(std::string_view name) noexcept;
inline constexpr Algo kAllAlgos[] = {Algo::LLE, Algo::MDS, Algo::Spectral, Algo::TSNE, Algo::Isomap};

struct Params {
  int n_neighbors = 10;
  double lle_reg = 1e-3;  // times trace of the local Gram matrix
  int mds_max_iter = 300;
  double mds_tol = 1e-6;
  double perplexity = 30.0;
  int tsne_iter = 1000;
  int exaggeration_iter = 250;
  double early_exaggeration = 12.0;
  double learning_rate = 200.0;
};

struct Embedding {
  Matrix coords;  // n x dim, finite
  Algo algo = Algo::MDS;
  Params params;
  std::uint64_t seed = 0;
  /// The neighbor graph had several components, joined by shortest bridging edges.
  bool disconnected_graph = false;
  /// MDS: stress after each SMACOF iteration (non-increasing).
  std::vector<double> stress_trace;
  /// t-SNE: gradient norm at the first and the last iteration, and the
  /// largest over the run. The first is tiny because the start is 1e-4 scale.
  double grad_norm_initial = 0.0;
  double grad_norm_final = 0.0;
  double grad_norm_peak = 0.0;
};

/// Throws InvalidArgument unless 1 <= d < min(cols, rows), TooFewRows when a
/// neighbor-based algorithm has rows <= n_neighbors, NonFiniteInput,
/// PerplexityTooLarge for t-SNE with perplexity >= rows - 1.
Embedding embed(Algo algo, const Matrix& x, int d, std::uint64_t seed, const Params& params = {});

/// sqrt of the sum over ordered pairs i != j of (|y_i - y_j| - |x_i - x_j|)^2.
/// Throws ShapeMismatch on differing row counts.
double stress(const Matrix& x_high, const Matrix& y_low);

/// Maps rows of `new_x` into an existing embedding: barycentric weights of
/// their k nearest training rows, applied to the training coordinates.
Matrix extend(const Matrix& train_x, const Matrix& train_coords, const Matrix& new_x, int k = 10,
              double reg = 1e-3);

// ------------------------------------------------------------ building blocks

/// Dense n x n LLE reconstruction weights; each row sums to 1.
Matrix lle_weights(const Matrix& x, int k, double reg, bool* bridged = nullptr);

/// Shortest-path lengths over the k-NN graph weighted by Euclidean distance.
Matrix geodesic_distances(const Matrix& x, int k, bool* bridged = nullptr);

/// Top-d coordinates from double-centering the squared distances.
Matrix classical_mds(const Matrix& distances, int d);

struct SmacofResult {
  Matrix y;
  std::vector<double> trace;  // stress() after each iteration
};
/// Metric SMACOF with unit weights from `init`. Stops after `max_iter` or when
/// an iteration lowers the stress by less than the fraction `tol`.
SmacofResult smacof(const Matrix& dissimilarities, Matrix init, int max_iter, double tol);

struct Affinities {
  Matrix p;                // joint, symmetric, sums to 1
  Vector row_perplexity;   // achieved perplexity of each conditional row
};
Affinities tsne_affinities(const Matrix& x, double perplexity);

}  // namespace cpfusion::manifold
