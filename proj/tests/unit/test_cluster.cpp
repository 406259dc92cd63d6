#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "cpfusion/cluster.hpp"
#include "cpfusion/rng.hpp"

using namespace cpfusion;
using namespace cpfusion::cluster;
namespace cl = cpfusion::cluster;

namespace {

Matrix four_points() {
  Matrix x(4, 2);
  x << 0, 0, 0, 1, 10, 0, 10, 1;
  return x;
}

struct Blobs {
  Matrix x;
  std::vector<int> truth;
};

Blobs blobs3(std::uint64_t seed, int per, double sigma) {
  Rng rng(seed);
  const double c[3][2] = {{0, 0}, {10, 0}, {5, 9}};
  Blobs b;
  b.x.resize(3 * per, 2);
  for (int i = 0; i < 3 * per; ++i) {
    const int g = i % 3;
    b.x(i, 0) = c[g][0] + sigma * rng.normal();
    b.x(i, 1) = c[g][1] + sigma * rng.normal();
    b.truth.push_back(g);
  }
  return b;
}

// Naive O(n^3) Ward: repeatedly merge the pair with the smallest increase
// in within-cluster sum of squares.
std::vector<int> naive_ward(const Matrix& x, int k) {
  const auto n = static_cast<int>(x.rows());
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) groups[static_cast<std::size_t>(i)] = {i};
  auto centroid = [&](const std::vector<int>& g) {
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(x.cols());
    for (int i : g) c += x.row(i);
    return Eigen::RowVectorXd(c / static_cast<double>(g.size()));
  };
  while (static_cast<int>(groups.size()) > k) {
    double best = 1e300;
    std::size_t ba = 0, bb = 1;
    for (std::size_t a = 0; a < groups.size(); ++a) {
      for (std::size_t b = a + 1; b < groups.size(); ++b) {
        const double na = groups[a].size(), nb = groups[b].size();
        const double cost = na * nb / (na + nb) * (centroid(groups[a]) - centroid(groups[b])).squaredNorm();
        if (cost < best) {
          best = cost;
          ba = a;
          bb = b;
        }
      }
    }
    groups[ba].insert(groups[ba].end(), groups[bb].begin(), groups[bb].end());
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(bb));
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (int i : groups[g]) labels[static_cast<std::size_t>(i)] = static_cast<int>(g);
  return labels;
}

}  // namespace

TEST_CASE("quality indices on the four-point fixture") {
  const std::vector<int> l{0, 0, 1, 1};
  const auto q = cluster_quality(four_points(), l);
  const double b = (10.0 + std::sqrt(101.0)) / 2.0;
  CHECK(q.silhouette == doctest::Approx((b - 1.0) / b).epsilon(1e-12));
  CHECK(std::abs(q.silhouette - 0.9003) < 1e-4);
  CHECK(q.calinski_harabasz == doctest::Approx(200.0).epsilon(1e-12));
  CHECK(q.davies_bouldin == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(silhouette(four_points(), {1, 1, 0, 0}) == q.silhouette);
}

TEST_CASE("quality errors and singleton convention") {
  CHECK_THROWS_AS(silhouette(four_points(), {0, 0, 0, 0}), Error);
  try {
    calinski_harabasz(four_points(), {2, 2, 2, 2});
    FAIL("expected SingleCluster");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SingleCluster);
  }
  CHECK_THROWS_AS(davies_bouldin(four_points(), {0, 1}), Error);
  // singleton at index 3 contributes 0
  const double s = silhouette(four_points(), {0, 0, 0, 1});
  CHECK(s > -1);
  CHECK(s < 1);
}

TEST_CASE("DB and CH respond monotonically to separation") {
  double prev_db = 0, prev_ch = 0;
  bool first = true;
  for (double sep : {8.0, 4.0, 2.0, 1.0}) {
    Matrix x(4, 2);
    x << 0, 0, 0, 1, sep, 0, sep, 1;
    const auto q = cluster_quality(x, {0, 0, 1, 1});
    if (!first) {
      CHECK(q.davies_bouldin > prev_db);
      CHECK(q.calinski_harabasz < prev_ch);
    }
    prev_db = q.davies_bouldin;
    prev_ch = q.calinski_harabasz;
    first = false;
  }
}

TEST_CASE("adjusted rand index") {
  CHECK(adjusted_rand(std::vector<int>{0, 0, 1, 1}, {0, 1, 0, 1}) == -0.5);
  CHECK(adjusted_rand(std::vector<int>{0, 0, 1, 1, 2}, {0, 0, 1, 1, 2}) == 1.0);
  CHECK(adjusted_rand(std::vector<int>{0, 0, 1, 1, 2}, {7, 7, 3, 3, 5}) == 1.0);
  CHECK(adjusted_rand(std::vector<std::string>{"a", "a", "b"}, {1, 1, 0}) == 1.0);
  CHECK_THROWS_AS(adjusted_rand(std::vector<int>{0}, {0, 1}), Error);

  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    std::vector<int> a(40), b(40);
    for (int i = 0; i < 40; ++i) {
      a[i] = static_cast<int>(rng.below(4));
      b[i] = static_cast<int>(rng.below(3));
    }
    std::vector<int> perm{2, 0, 1};
    std::vector<int> bp(40);
    for (int i = 0; i < 40; ++i) bp[i] = perm[static_cast<std::size_t>(b[i])];
    CHECK(adjusted_rand(a, b) == adjusted_rand(a, bp));
    CHECK(adjusted_rand(a, b) <= 1.0);
  }
}

TEST_CASE("every algorithm recovers well separated blobs") {
  const auto b = blobs3(1, 40, 0.5);
  for (auto algo : kAllAlgos) {
    CAPTURE(algo_name(algo));
    const auto r = cl::cluster(algo, b.x, 3, 7);
    CHECK(r.k == 3);
    CHECK(adjusted_rand(b.truth, r.labels) == doctest::Approx(1.0));
    std::set<int> ids(r.labels.begin(), r.labels.end());
    CHECK(ids.size() == 3);
    CHECK(cl::cluster(algo, b.x, 3, 7).labels == r.labels);
  }
}

TEST_CASE("k-means edge cases and inertia trace") {
  const auto b = blobs3(2, 10, 1.0);
  const auto r = kmeans(b.x, static_cast<int>(b.x.rows()), 3);
  CHECK(r.inertia == doctest::Approx(0.0));
  CHECK(std::set<int>(r.labels.begin(), r.labels.end()).size() == b.x.rows());
  try {
    kmeans(b.x, 1, 1);
    FAIL("expected KOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::KOutOfRange);
  }
  CHECK_THROWS_AS(cl::cluster(Algo::Spectral, b.x, 31, 1), Error);

  Rng rng(5);
  Matrix x(300, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  for (int k = 2; k <= 8; ++k) {
    const auto run = kmeans(x, k, 11);
    for (std::size_t i = 1; i < run.trace.size(); ++i) CHECK(run.trace[i] <= run.trace[i - 1] + 1e-9);
    CHECK(run.inertia == doctest::Approx(run.trace.back()));
  }
}

TEST_CASE("ward dendrogram matches naive merging") {
  Rng rng(6);
  Matrix x(30, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(0, 10);
  for (int k = 2; k <= 8; ++k) {
    const auto fast = agglomerative(x, k);
    CHECK(adjusted_rand(naive_ward(x, k), fast.labels) == doctest::Approx(1.0));
  }
  const auto sweep = cluster_sweep(Algo::Agglomerative, x, {2, 5, 8}, 0);
  CHECK(sweep[1].labels == agglomerative(x, 5).labels);
  const auto avg = agglomerative(x, 3, Linkage::Average);
  CHECK(avg.k == 3);
}

TEST_CASE("spectral separates concentric rings, k-means does not") {
  Rng rng(8);
  const int n = 150;
  Matrix x(2 * n, 2);
  std::vector<int> truth;
  for (int i = 0; i < 2 * n; ++i) {
    const double r = i < n ? 1.0 : 4.0;
    const double th = 2 * std::numbers::pi * rng.uniform();
    x(i, 0) = r * std::cos(th) + 0.05 * rng.normal();
    x(i, 1) = r * std::sin(th) + 0.05 * rng.normal();
    truth.push_back(i < n ? 0 : 1);
  }
  const auto sp = cl::cluster(Algo::Spectral, x, 2, 1);
  const auto km = cl::cluster(Algo::KMeans, x, 2, 1);
  CHECK(adjusted_rand(truth, sp.labels) > 0.99);
  CHECK(adjusted_rand(truth, sp.labels) > adjusted_rand(truth, km.labels));
  // the rings are two separate 10-NN components
  CHECK(sp.disconnected_graph);

  Matrix ring = x.topRows(n);
  CHECK_FALSE(cl::cluster(Algo::Spectral, ring, 2, 1).disconnected_graph);

  // separated blobs with 10-NN are disconnected: flagged, still clustered
  const auto b = blobs3(3, 30, 0.2);
  const auto disc = cl::cluster(Algo::Spectral, b.x, 3, 1);
  CHECK(disc.disconnected_graph);
  CHECK(adjusted_rand(b.truth, disc.labels) == doctest::Approx(1.0));
}

TEST_CASE("sweep equals per-k calls") {
  const auto b = blobs3(4, 20, 2.0);
  for (auto algo : kAllAlgos) {
    const auto sw = cluster_sweep(algo, b.x, {2, 3, 4}, 5);
    for (std::size_t i = 0; i < 3; ++i) CHECK(sw[i].labels == cl::cluster(algo, b.x, static_cast<int>(i) + 2, 5).labels);
  }
}

TEST_CASE("row normalization") {
  Matrix x(2, 2);
  x << 3, 4, 0, 0;
  const auto r = row_normalize(x);
  CHECK(r(0, 0) == doctest::Approx(0.6));
  CHECK(r(1, 1) == 0);
}

TEST_CASE("robustness statistics") {
  const std::vector<double> c{2, 2, 2};
  auto r = robustness_stats(c);
  CHECK(r.variance == 0);
  CHECK(r.nvar == 0);
  const std::vector<double> s{1, 3};
  r = robustness_stats(s);
  CHECK(r.mean == 2);
  CHECK(r.variance == doctest::Approx(2.0));
  CHECK(r.nvar == doctest::Approx(std::sqrt(2.0) / 2));
  CHECK(r.nvar * r.mean == doctest::Approx(std::sqrt(r.variance)).epsilon(1e-9));
  const std::vector<double> scaled{3.5, 10.5};
  CHECK(robustness_stats(scaled).nvar == doctest::Approx(r.nvar).epsilon(1e-12));
  const std::vector<double> z{-1, 1};
  CHECK(robustness_stats(z).zero_mean);
  CHECK(std::isnan(robustness_stats(z).nvar));
  CHECK_THROWS_AS(robustness_stats(std::span<const double>()), Error);
}
