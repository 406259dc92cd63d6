#include "neighbors.hpp"

#include <algorithm>
#include <limits>

namespace cpfusion::detail {

Matrix pairwise_distances(const Matrix& x) {
  const auto n = x.rows();
  Matrix d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).norm();
  }
  return d;
}

std::vector<std::vector<Neighbor>> knn_graph(const Matrix& x, int k) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto kk = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), n > 0 ? n - 1 : 0);
  std::vector<std::vector<Neighbor>> out(n);
  std::vector<Neighbor> cand;
  cand.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) {
        cand.push_back({j, (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm()});
      }
    }
    auto less = [](const Neighbor& a, const Neighbor& b) { return a.dist < b.dist || (a.dist == b.dist && a.index < b.index); };
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), cand.end(), less);
    out[i].assign(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk));
  }
  return out;
}

BridgedGraph connected_knn_graph(const Matrix& x, int k) {
  BridgedGraph g;
  g.lists = knn_graph(x, k);
  const auto n = g.lists.size();
  if (n == 0) return g;

  // union-find over the undirected k-NN edges
  std::vector<std::size_t> parent(n);
  for (std::size_t i = 0; i < n; ++i) parent[i] = i;
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& nb : g.lists[i]) parent[find(i)] = find(nb.index);
  std::vector<std::vector<std::size_t>> members(n);
  for (std::size_t i = 0; i < n; ++i) members[find(i)].push_back(i);

  // Prim over components: grow from row 0's component
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<char> in_tree(n, 0);
  std::vector<double> best(n, inf);
  std::vector<std::size_t> from(n, 0);
  auto absorb = [&](std::size_t root) {
    for (std::size_t u : members[root]) in_tree[u] = 1;
    for (std::size_t u : members[root]) {
      for (std::size_t v = 0; v < n; ++v) {
        if (in_tree[v]) continue;
        const double d = (x.row(static_cast<Eigen::Index>(u)) - x.row(static_cast<Eigen::Index>(v))).norm();
        if (d < best[v] || (d == best[v] && u < from[v])) {
          best[v] = d;
          from[v] = u;
        }
      }
    }
  };
  absorb(find(0));
  for (;;) {
    std::size_t arg = n;
    for (std::size_t v = 0; v < n; ++v)
      if (!in_tree[v] && (arg == n || best[v] < best[arg])) arg = v;
    if (arg == n) break;
    const std::size_t u = from[arg];
    g.lists[u].push_back({arg, best[arg]});
    g.lists[arg].push_back({u, best[arg]});
    ++g.bridges;
    absorb(find(arg));
  }
  return g;
}

std::vector<int> component_labels(const Matrix& adjacency) {
  const auto n = adjacency.rows();
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  int next = 0;
  std::vector<Eigen::Index> stack;
  for (Eigen::Index s = 0; s < n; ++s) {
    if (label[static_cast<std::size_t>(s)] >= 0) continue;
    label[static_cast<std::size_t>(s)] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (Eigen::Index v = 0; v < n; ++v) {
        if ((adjacency(u, v) != 0.0 || adjacency(v, u) != 0.0) && label[static_cast<std::size_t>(v)] < 0) {
          label[static_cast<std::size_t>(v)] = next;
          stack.push_back(v);
        }
      }
    }
    ++next;
  }
  return label;
}

int component_count(const Matrix& adjacency) {
  const auto l = component_labels(adjacency);
  return l.empty() ? 0 : *std::max_element(l.begin(), l.end()) + 1;
}

}  // namespace cpfusion::detail
