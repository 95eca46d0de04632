#include "dncit/knn.hpp"

#include <algorithm>
#include <cmath>

namespace dncit {

double row_distance(const Matrix& m, Index i, Index j, Metric metric) {
  double acc = 0.0;
  for (Index c = 0; c < m.cols(); ++c) {
    const double diff = m(i, c) - m(j, c);
    if (metric == Metric::kEuclidean) {
      acc += diff * diff;
    } else {
      acc = std::max(acc, std::abs(diff));
    }
  }
  return acc;
}

KdTree::KdTree(const Matrix& points, Metric metric, Index leaf_size)
    : n_(points.rows()), d_(points.cols()), metric_(metric), leaf_size_(std::max<Index>(leaf_size, 1)) {
  coords_.resize(static_cast<std::size_t>(n_ * d_));
  for (Index i = 0; i < n_; ++i) {
    for (Index c = 0; c < d_; ++c) coords_[static_cast<std::size_t>(i * d_ + c)] = points(i, c);
  }
  order_.resize(static_cast<std::size_t>(n_));
  for (Index i = 0; i < n_; ++i) order_[static_cast<std::size_t>(i)] = i;
  nodes_.reserve(static_cast<std::size_t>(2 * (n_ / leaf_size_ + 1)));
  if (n_ > 0) build(0, n_);
}

Index KdTree::build(Index begin, Index end) {
  const Index id = static_cast<Index>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size_ || d_ == 0) return id;

  Index best_dim = 0;
  double best_spread = -1.0;
  for (Index c = 0; c < d_; ++c) {
    double lo = coords_[static_cast<std::size_t>(order_[static_cast<std::size_t>(begin)] * d_ + c)];
    double hi = lo;
    for (Index i = begin; i < end; ++i) {
      const double v = coords_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)] * d_ + c)];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_dim = c;
    }
  }
  if (best_spread <= 0.0) return id;  // all points coincide

  const Index mid = begin + (end - begin) / 2;
  auto first = order_.begin() + begin;
  std::nth_element(first, order_.begin() + mid, order_.begin() + end, [&](Index a, Index b) {
    return coords_[static_cast<std::size_t>(a * d_ + best_dim)] <
           coords_[static_cast<std::size_t>(b * d_ + best_dim)];
  });
  const double split = coords_[static_cast<std::size_t>(order_[static_cast<std::size_t>(mid)] * d_ + best_dim)];
  const Index left = build(begin, mid);
  const Index right = build(mid, end);
  Node& node = nodes_[static_cast<std::size_t>(id)];
  node.split_dim = best_dim;
  node.split_value = split;
  node.left = left;
  node.right = right;
  return id;
}

double KdTree::distance_to(const double* query, Index point) const {
  const double* p = &coords_[static_cast<std::size_t>(point * d_)];
  double acc = 0.0;
  for (Index c = 0; c < d_; ++c) {
    const double diff = query[c] - p[c];
    if (metric_ == Metric::kEuclidean) {
      acc += diff * diff;
    } else {
      acc = std::max(acc, std::abs(diff));
    }
  }
  return acc;
}

void KdTree::search(Index node_id, const double* query, Index exclude, Index k,
                    std::vector<Neighbor>& heap) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.left < 0) {
    for (Index i = node.begin; i < node.end; ++i) {
      const Index idx = order_[static_cast<std::size_t>(i)];
      if (idx == exclude) continue;
      const Neighbor cand{distance_to(query, idx), idx};
      if (static_cast<Index>(heap.size()) < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), neighbor_less);
      } else if (neighbor_less(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), neighbor_less);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), neighbor_less);
      }
    }
    return;
  }
  const double diff = query[node.split_dim] - node.split_value;
  const Index near = diff < 0.0 ? node.left : node.right;
  const Index far = diff < 0.0 ? node.right : node.left;
  search(near, query, exclude, k, heap);
  const double bound = metric_ == Metric::kEuclidean ? diff * diff : std::abs(diff);
  // Equal bounds must still be visited: a tied point with a smaller index wins.
  if (static_cast<Index>(heap.size()) < k || bound <= heap.front().distance) {
    search(far, query, exclude, k, heap);
  }
}

std::vector<Neighbor> KdTree::query_row(Index row, Index k) const {
  std::vector<Neighbor> heap;
  heap.reserve(static_cast<std::size_t>(k) + 1);
  if (n_ == 0 || k <= 0) return heap;
  search(0, &coords_[static_cast<std::size_t>(row * d_)], row, k, heap);
  std::sort_heap(heap.begin(), heap.end(), neighbor_less);
  return heap;
}

namespace {

std::vector<Neighbor> brute_force_row(const Matrix& m, Index row, Index k, Metric metric) {
  std::vector<Neighbor> all;
  all.reserve(static_cast<std::size_t>(m.rows()));
  for (Index j = 0; j < m.rows(); ++j) {
    if (j != row) all.push_back({row_distance(m, row, j, metric), j});
  }
  std::partial_sort(all.begin(), all.begin() + k, all.end(), neighbor_less);
  all.resize(static_cast<std::size_t>(k));
  return all;
}

}  // namespace

KnnGraph build_knn_graph(const Matrix& m, Index k, Metric metric, KnnStrategy strategy) {
  const Index n = m.rows();
  if (k < 1 || k > n - 1) {
    throw Error(ErrorCode::kKTooLarge,
                "k = " + std::to_string(k) + " must lie in [1, n-1] for n = " + std::to_string(n));
  }
  const bool use_tree = strategy == KnnStrategy::kTree ||
                        (strategy == KnnStrategy::kAuto && m.cols() <= 20 && m.cols() > 0);
  KnnGraph graph;
  graph.k = k;
  graph.metric = metric;
  graph.neighbor_lists.resize(static_cast<std::size_t>(n));
  graph.degrees.assign(static_cast<std::size_t>(n), k);
  if (use_tree) {
    KdTree tree(m, metric);
    for (Index i = 0; i < n; ++i) {
      auto nb = tree.query_row(i, k);
      auto& list = graph.neighbor_lists[static_cast<std::size_t>(i)];
      for (const auto& x : nb) list.push_back(x.index);
    }
  } else {
    for (Index i = 0; i < n; ++i) {
      auto nb = brute_force_row(m, i, k, metric);
      auto& list = graph.neighbor_lists[static_cast<std::size_t>(i)];
      for (const auto& x : nb) list.push_back(x.index);
    }
  }
  return graph;
}

}  // namespace dncit
