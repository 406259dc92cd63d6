#pragma once

#include <cstddef>
#include <vector>

#include "cpfusion/common.hpp"

namespace cpfusion::detail {

struct Neighbor {
  std::size_t index;
  double dist;  // Euclidean
};

/// The k nearest other rows of every row, nearest first; ties by index.
std::vector<std::vector<Neighbor>> knn_graph(const Matrix& x, int k);

/// k-NN lists joined into one component: while several components remain
/// (edges taken as undirected), the shortest edge from the component set
/// reachable from row 0 to any other row is added to both endpoints' lists.
struct BridgedGraph {
  std::vector<std::vector<Neighbor>> lists;
  int bridges = 0;
};
BridgedGraph connected_knn_graph(const Matrix& x, int k);

/// Pairwise Euclidean distances.
Matrix pairwise_distances(const Matrix& x);

/// Connected-component id per node of a dense adjacency (nonzero = edge).
std::vector<int> component_labels(const Matrix& adjacency);
int component_count(const Matrix& adjacency);

}  // namespace cpfusion::detail
