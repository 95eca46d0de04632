#include "dncit/fcit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace dncit {

void validate(const FcitParams& p) {
  if (!(p.train_fraction > 0.0 && p.train_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "train_fraction must lie in (0, 1)");
  }
  if (p.num_splits < 1) throw Error(ErrorCode::kInvalidArgument, "num_splits must be >= 1");
  validate(p.trees);
}

namespace {

Matrix take_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

TestOutcome fcit_test(const FeatureSample& sample, const FcitParams& params, double alpha) {
  const auto start = std::chrono::steady_clock::now();
  validate(params);
  const Index n = sample.n();
  if (n < kFcitMinRows) throw Error(ErrorCode::kTooFewRows, "FCIT needs n >= 60");
  const Index n_train = static_cast<Index>(std::lround(params.train_fraction * static_cast<double>(n)));
  if (n_train < 3 || n_train >= n) {
    throw Error(ErrorCode::kTooFewRows, "training split too small for the tree ensemble");
  }
  TreeParams trees = params.trees;
  trees.min_leaf = std::min(trees.min_leaf, (n_train - 1) / 2);
  Matrix full(n, sample.q() + sample.p());
  full << sample.x(), sample.z();

  std::vector<double> diffs;
  diffs.reserve(static_cast<std::size_t>(params.num_splits * (n - n_train)));
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index s = 0; s < params.num_splits; ++s) {
    std::mt19937_64 rng(derive_seed(params.seed, 31, static_cast<std::uint64_t>(s)));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::vector<Index> train(order.begin(), order.begin() + n_train);
    const std::vector<Index> test(order.begin() + n_train, order.end());
    Vector y_train(n_train);
    for (Index i = 0; i < n_train; ++i) y_train(i) = sample.y()(train[static_cast<std::size_t>(i)]);

    const Matrix full_test = take_rows(full, test);
    const TreeEnsemble f = fit_tree_ensemble(take_rows(full, train), y_train, trees,
                                             derive_seed(params.seed, 32, static_cast<std::uint64_t>(s)));
    const Vector pred_f = f.predict(full_test);
    Vector pred_g;
    if (sample.unconditional()) {
      pred_g = Vector::Constant(static_cast<Index>(test.size()), y_train.mean());
    } else {
      const TreeEnsemble g = fit_tree_ensemble(take_rows(sample.z(), train), y_train, trees,
                                               derive_seed(params.seed, 33, static_cast<std::uint64_t>(s)));
      pred_g = g.predict(take_rows(sample.z(), test));
    }
    for (std::size_t i = 0; i < test.size(); ++i) {
      const double y = sample.y()(test[i]);
      const double lf = (y - pred_f(static_cast<Index>(i))) * (y - pred_f(static_cast<Index>(i)));
      const double lg = (y - pred_g(static_cast<Index>(i))) * (y - pred_g(static_cast<Index>(i)));
      diffs.push_back(lg - lf);
    }
  }

  const auto count = static_cast<double>(diffs.size());
  double statistic = 0.0;
  double p = 1.0;
  if (params.paired_test == PairedTest::kT) {
    const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / count;
    double ss = 0.0;
    for (double d : diffs) ss += (d - mean) * (d - mean);
    const double sd = std::sqrt(ss / (count - 1.0));
    if (sd > 0.0 && std::isfinite(sd)) {
      statistic = mean / (sd / std::sqrt(count));
      const boost::math::students_t dist(count - 1.0);
      p = boost::math::cdf(boost::math::complement(dist, statistic));
    }
  } else {
    Index positive = 0, nonzero = 0;
    for (double d : diffs) {
      if (d != 0.0) ++nonzero;
      if (d > 0.0) ++positive;
    }
    statistic = static_cast<double>(positive);
    if (nonzero > 0) {
      const boost::math::binomial dist(static_cast<double>(nonzero), 0.5);
      // P(B >= positive)
      p = positive == 0 ? 1.0 : boost::math::cdf(boost::math::complement(dist, static_cast<double>(positive - 1)));
    }
  }
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  ParamMap resolved{
      {"train_fraction", params.train_fraction},
      {"tree_count", static_cast<double>(params.trees.tree_count)},
      {"max_depth", static_cast<double>(params.trees.max_depth)},
      {"min_leaf", static_cast<double>(trees.min_leaf)},
      {"num_splits", static_cast<double>(params.num_splits)},
      {"paired_test", std::string(params.paired_test == PairedTest::kT ? "t" : "sign")},
      {"loss", std::string("squared_error")},
  };
  return make_outcome(Method::kFcit, statistic, p, alpha, std::move(resolved), params.seed, ms);
}

}  // namespace dncit
