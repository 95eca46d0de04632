#pragma once

#include <optional>

#include "dncit/common.hpp"
#include "dncit/data_model.hpp"

namespace dncit {

enum class RcotNull { kMomentMatch, kPermutation };

struct RcotParams {
  Index num_f_x = 25;   // Fourier features for X^omega
  Index num_f_y = 5;    // Fourier features for Y
  Index num_f_z = 100;  // Fourier features for Z
  double ridge_lambda = 0.1;
  std::uint64_t seed = 0;
  RcotNull null_method = RcotNull::kMomentMatch;
  Index num_permutations = 499;
  Index bandwidth_rows = 500;  // rows used by the median heuristic
};

void validate(const RcotParams& params);

struct RcotStatistic {
  double statistic = 0.0;
  Matrix a_residuals;        // n x a
  Matrix b_residuals;        // n x b
  Matrix residual_products;  // n x (a*b); column j*b + k = a_res[:, j] .* b_res[:, k]
  double sigma_x = 0.0;
  double sigma_y = 0.0;
  double sigma_z = 0.0;
};

// Core statistic on precomputed feature blocks. Each block is column
// standardised, A and B are ridge-residualised on C (mean-centred only when C
// has no columns), and the statistic is n * ||A_res' B_res / (n-1)||_F^2.
RcotStatistic rcot_statistic_from_features(const Matrix& a, const Matrix& b, const Matrix& c,
                                           double ridge_lambda);

// Random Fourier feature maps of the standardised blocks with median-heuristic
// bandwidths, followed by rcot_statistic_from_features. y may have several
// columns (used by the confounder audit).
RcotStatistic rcot_statistic_blocks(const Matrix& x, const Matrix& y, const Matrix& z,
                                    const RcotParams& params);

RcotStatistic rcot_statistic(const FeatureSample& sample, const RcotParams& params);

// Upper tail of sum_i lambda_i chi^2_1 at x via a shifted gamma matching the
// first three cumulants.
double weighted_chisq_upper_tail(double x, const Vector& lambdas);

double rcot_pvalue(const RcotStatistic& stat, const RcotParams& params);

TestOutcome rcot_test_blocks(const Matrix& x, const Matrix& y, const Matrix& z,
                             const RcotParams& params, double alpha);

TestOutcome rcot_test(const FeatureSample& sample, const RcotParams& params, double alpha);

}  // namespace dncit
