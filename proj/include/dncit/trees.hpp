#pragma once

#include <vector>

#include "dncit/common.hpp"

namespace dncit {

struct TreeParams {
  Index tree_count = 100;
  Index max_depth = 8;
  Index min_leaf = 5;
  Index max_bins = 64;  // candidate thresholds per feature
};

void validate(const TreeParams& params);

struct TreeNode {
  Index feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  Index left = -1;
  Index right = -1;
  double value = 0.0;
};

// Bagged regression trees with squared-error splits. Each split considers
// ceil(sqrt(d)) features drawn without replacement; candidate thresholds are
// midpoints between quantile-spaced distinct training values.
class TreeEnsemble {
 public:
  TreeEnsemble() = default;

  Vector predict(const Matrix& features) const;
  double predict_row(const Matrix& features, Index row) const;

  Index tree_count() const { return static_cast<Index>(trees_.size()); }
  Index dim() const { return dim_; }

 private:
  friend TreeEnsemble fit_tree_ensemble(const Matrix&, const Vector&, const TreeParams&,
                                        std::uint64_t);
  std::vector<std::vector<TreeNode>> trees_;
  Index dim_ = 0;
};

TreeEnsemble fit_tree_ensemble(const Matrix& features, const Vector& targets,
                               const TreeParams& params, std::uint64_t seed);

}  // namespace dncit
