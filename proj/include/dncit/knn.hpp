#pragma once

#include <vector>

#include "dncit/common.hpp"

namespace dncit {

enum class Metric { kEuclidean, kChebyshev };
enum class KnnStrategy { kAuto, kTree, kBruteForce };

struct Neighbor {
  double distance;
  Index index;
};

// Strict weak order used everywhere for neighbour ranking: distance first,
// then smaller row index.
inline bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

// Distance between two rows as computed by every knn routine in the library.
// Euclidean distances are returned squared; compare with squared radii.
double row_distance(const Matrix& m, Index i, Index j, Metric metric);

// Exact kd-tree over the rows of a matrix. Intended for low dimension;
// build_knn_graph falls back to brute force above 20 columns.
class KdTree {
 public:
  KdTree(const Matrix& points, Metric metric, Index leaf_size = 16);

  // The k nearest rows to row `row`, excluding the row itself, ordered by
  // neighbor_less. Euclidean distances are reported squared.
  std::vector<Neighbor> query_row(Index row, Index k) const;

  Index size() const { return n_; }
  Index dim() const { return d_; }

 private:
  struct Node {
    Index begin = 0;
    Index end = 0;
    Index split_dim = -1;
    double split_value = 0.0;
    Index left = -1;
    Index right = -1;
  };

  Index build(Index begin, Index end);
  double distance_to(const double* query, Index point) const;
  void search(Index node, const double* query, Index exclude, Index k,
              std::vector<Neighbor>& heap) const;

  Index n_ = 0;
  Index d_ = 0;
  Metric metric_;
  Index leaf_size_;
  std::vector<double> coords_;  // row-major copy
  std::vector<Index> order_;
  std::vector<Node> nodes_;
};

// Undirected geometric structure on the rows of a matrix: node i's list holds
// its k nearest distinct rows, nearest first with ties broken by smaller row
// index. No self-loops.
struct KnnGraph {
  std::vector<std::vector<Index>> neighbor_lists;
  std::vector<Index> degrees;
  Index k = 0;
  Metric metric = Metric::kEuclidean;
};

KnnGraph build_knn_graph(const Matrix& m, Index k, Metric metric,
                         KnnStrategy strategy = KnnStrategy::kAuto);

}  // namespace dncit
