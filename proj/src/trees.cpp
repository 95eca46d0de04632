#include "dncit/trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dncit {

void validate(const TreeParams& p) {
  if (p.tree_count < 1) throw Error(ErrorCode::kInvalidArgument, "tree_count must be >= 1");
  if (p.max_depth < 0) throw Error(ErrorCode::kInvalidArgument, "max_depth must be >= 0");
  if (p.min_leaf < 1) throw Error(ErrorCode::kInvalidArgument, "min_leaf must be >= 1");
  if (p.max_bins < 2 || p.max_bins > 65535) {
    throw Error(ErrorCode::kInvalidArgument, "max_bins must lie in [2, 65535]");
  }
}

namespace {

struct Binned {
  std::vector<std::vector<double>> cuts;      // per feature, increasing
  std::vector<std::vector<std::uint16_t>> bin;  // per feature, per row: #cuts < x
};

Binned bin_features(const Matrix& features, Index max_bins) {
  const Index n = features.rows();
  Binned out;
  out.cuts.resize(static_cast<std::size_t>(features.cols()));
  out.bin.resize(static_cast<std::size_t>(features.cols()));
  std::vector<double> uniq;
  for (Index c = 0; c < features.cols(); ++c) {
    uniq.assign(features.col(c).data(), features.col(c).data() + n);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    auto& cuts = out.cuts[static_cast<std::size_t>(c)];
    const auto u = static_cast<Index>(uniq.size());
    if (u <= max_bins) {
      for (Index i = 1; i < u; ++i) {
        cuts.push_back(0.5 * (uniq[static_cast<std::size_t>(i - 1)] + uniq[static_cast<std::size_t>(i)]));
      }
    } else {
      for (Index b = 1; b < max_bins; ++b) {
        const Index idx = b * u / max_bins;
        const double cut =
            0.5 * (uniq[static_cast<std::size_t>(idx - 1)] + uniq[static_cast<std::size_t>(idx)]);
        if (cuts.empty() || cut > cuts.back()) cuts.push_back(cut);
      }
    }
    auto& bins = out.bin[static_cast<std::size_t>(c)];
    bins.resize(static_cast<std::size_t>(n));
    for (Index r = 0; r < n; ++r) {
      // x <= cuts[b] exactly when bin(x) <= b.
      bins[static_cast<std::size_t>(r)] = static_cast<std::uint16_t>(
          std::lower_bound(cuts.begin(), cuts.end(), features(r, c)) - cuts.begin());
    }
  }
  return out;
}

class TreeBuilder {
 public:
  TreeBuilder(const Binned& binned, const Vector& targets, const TreeParams& params,
              std::mt19937_64& rng)
      : binned_(binned), targets_(targets), params_(params), rng_(rng) {
    const auto d = static_cast<Index>(binned.cuts.size());
    mtry_ = std::max<Index>(1, static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(d)))));
    features_.resize(static_cast<std::size_t>(d));
    std::iota(features_.begin(), features_.end(), Index{0});
  }

  std::vector<TreeNode> build(std::vector<Index> rows) {
    rows_ = std::move(rows);
    nodes_.clear();
    grow(0, static_cast<Index>(rows_.size()), 0);
    return std::move(nodes_);
  }

 private:
  Index grow(Index begin, Index end, Index depth) {
    const Index id = static_cast<Index>(nodes_.size());
    nodes_.emplace_back();
    const Index count = end - begin;
    double sum = 0.0;
    for (Index i = begin; i < end; ++i) sum += targets_(rows_[static_cast<std::size_t>(i)]);
    nodes_[static_cast<std::size_t>(id)].value = sum / static_cast<double>(count);
    if (depth >= params_.max_depth || count < 2 * params_.min_leaf) return id;

    // Sample mtry features without replacement (partial Fisher-Yates).
    const auto d = static_cast<Index>(features_.size());
    for (Index t = 0; t < std::min(mtry_, d); ++t) {
      std::uniform_int_distribution<Index> pick(t, d - 1);
      std::swap(features_[static_cast<std::size_t>(t)], features_[static_cast<std::size_t>(pick(rng_))]);
    }
    const double parent_score = sum * sum / static_cast<double>(count);
    double best_score = parent_score + 1e-12 * std::abs(parent_score) + 1e-300;
    Index best_feature = -1;
    Index best_bin = -1;
    for (Index t = 0; t < std::min(mtry_, d); ++t) {
      const Index f = features_[static_cast<std::size_t>(t)];
      const auto& cuts = binned_.cuts[static_cast<std::size_t>(f)];
      if (cuts.empty()) continue;
      const auto& bins = binned_.bin[static_cast<std::size_t>(f)];
      hist_sum_.assign(cuts.size() + 1, 0.0);
      hist_cnt_.assign(cuts.size() + 1, 0);
      for (Index i = begin; i < end; ++i) {
        const Index r = rows_[static_cast<std::size_t>(i)];
        const auto b = bins[static_cast<std::size_t>(r)];
        hist_sum_[b] += targets_(r);
        ++hist_cnt_[b];
      }
      double left_sum = 0.0;
      Index left_cnt = 0;
      for (std::size_t b = 0; b < cuts.size(); ++b) {
        left_sum += hist_sum_[b];
        left_cnt += hist_cnt_[b];
        const Index right_cnt = count - left_cnt;
        if (left_cnt < params_.min_leaf) continue;
        if (right_cnt < params_.min_leaf) break;
        const double right_sum = sum - left_sum;
        const double score = left_sum * left_sum / static_cast<double>(left_cnt) +
                             right_sum * right_sum / static_cast<double>(right_cnt);
        if (score > best_score) {
          best_score = score;
          best_feature = f;
          best_bin = static_cast<Index>(b);
        }
      }
    }
    if (best_feature < 0) return id;

    const auto& bins = binned_.bin[static_cast<std::size_t>(best_feature)];
    const auto mid_it = std::partition(rows_.begin() + begin, rows_.begin() + end, [&](Index r) {
      return bins[static_cast<std::size_t>(r)] <= best_bin;
    });
    const Index mid = static_cast<Index>(mid_it - rows_.begin());
    const Index left = grow(begin, mid, depth + 1);
    const Index right = grow(mid, end, depth + 1);
    TreeNode& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = binned_.cuts[static_cast<std::size_t>(best_feature)][static_cast<std::size_t>(best_bin)];
    node.left = left;
    node.right = right;
    return id;
  }

  const Binned& binned_;
  const Vector& targets_;
  const TreeParams& params_;
  std::mt19937_64& rng_;
  Index mtry_ = 1;
  std::vector<Index> features_;
  std::vector<Index> rows_;
  std::vector<TreeNode> nodes_;
  std::vector<double> hist_sum_;
  std::vector<Index> hist_cnt_;
};

}  // namespace

TreeEnsemble fit_tree_ensemble(const Matrix& features, const Vector& targets,
                               const TreeParams& params, std::uint64_t seed) {
  validate(params);
  const Index n = features.rows();
  if (targets.size() != n) throw Error(ErrorCode::kRowMismatch, "features and targets differ in rows");
  if (n <= 2 * params.min_leaf) {
    throw Error(ErrorCode::kTooFewRows, "tree ensemble needs n_train > 2 * min_leaf");
  }
  const Binned binned = bin_features(features, params.max_bins);
  TreeEnsemble ensemble;
  ensemble.dim_ = features.cols();
  ensemble.trees_.reserve(static_cast<std::size_t>(params.tree_count));
  std::vector<Index> rows(static_cast<std::size_t>(n));
  for (Index t = 0; t < params.tree_count; ++t) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::uniform_int_distribution<Index> draw(0, n - 1);
    for (auto& r : rows) r = draw(rng);
    TreeBuilder builder(binned, targets, params, rng);
    ensemble.trees_.push_back(builder.build(rows));
  }
  return ensemble;
}

double TreeEnsemble::predict_row(const Matrix& features, Index row) const {
  double acc = 0.0;
  for (const auto& tree : trees_) {
    Index node = 0;
    while (tree[static_cast<std::size_t>(node)].feature >= 0) {
      const TreeNode& nd = tree[static_cast<std::size_t>(node)];
      node = features(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    acc += tree[static_cast<std::size_t>(node)].value;
  }
  return acc / static_cast<double>(trees_.size());
}

Vector TreeEnsemble::predict(const Matrix& features) const {
  if (features.cols() != dim_) throw Error(ErrorCode::kDimMismatch, "feature dimension mismatch");
  Vector out(features.rows());
  for (Index r = 0; r < features.rows(); ++r) out(r) = predict_row(features, r);
  return out;
}

}  // namespace dncit
