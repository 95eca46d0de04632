#pragma once

#include "dncit/common.hpp"
#include "dncit/data_model.hpp"
#include "dncit/trees.hpp"

namespace dncit {

enum class PairedTest { kT, kSign };

struct FcitParams {
  double train_fraction = 0.5;
  // Larger leaves than the tree default: with min_leaf = 5 a forest on a
  // single Z column overfits more than one on many proxies of Z, and the test
  // rejects under the null. Clamped to (n_train - 1) / 2 for small samples.
  TreeParams trees{.min_leaf = 20};
  Index num_splits = 8;  // 1 reproduces the single-split variant
  PairedTest paired_test = PairedTest::kT;
  std::uint64_t seed = 0;
};

inline constexpr Index kFcitMinRows = 60;

void validate(const FcitParams& params);

// Held-out squared losses of g(Z) and f(X, Z) are differenced per test row
// (d = loss_g - loss_f), pooled over the random splits, and tested for a
// positive mean: one-sided t-test with N - 1 dof (statistic = t) or an exact
// sign test (statistic = number of positive differences). Zero-variance
// differences give p = 1.
TestOutcome fcit_test(const FeatureSample& sample, const FcitParams& params, double alpha);

}  // namespace dncit
