#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dncit/common.hpp"
#include "dncit/data_model.hpp"

namespace dncit {

double digamma(double x);

struct CmiParams {
  std::optional<Index> k_cmi;  // unset = round(0.1 n)
  Index k_perm = 5;
  Index num_permutations = 199;
  double noise_scale = 1e-10;  // jitter SD relative to the standardised column SD
  std::uint64_t seed = 0;
  bool allow_large_n = false;  // lift the n <= 5000 guard
};

inline constexpr Index kCmiMaxRows = 5000;

Index resolve_k_cmi(const CmiParams& params, Index n);
void validate(const CmiParams& params, Index n);

// Nearest-neighbour CMI estimator over a fixed (X, Z) and varying y.
//
// Counts are taken under the max-norm with strict inequality against the
// distance to the k-th joint neighbour. In the conditional form the counts
// include the point itself, so the estimate is
//   psi(k) + mean_i [psi(n_z) - psi(n_xz) - psi(n_yz)];
// without Z it is psi(k) + psi(n) - mean_i [psi(n_x + 1) + psi(n_y + 1)]
// with self excluded.
class CmiEstimator {
 public:
  CmiEstimator(const Matrix& x, const Matrix& z, const Vector& y, Index k, double noise_scale,
               std::uint64_t seed);

  // y must be a rearrangement of the (jittered) y returned by jittered_y().
  double estimate(const Vector& y) const;

  const Vector& jittered_y() const { return y_; }
  const Matrix& jittered_z() const { return z_; }
  Index n() const { return y_.size(); }

 private:
  double dist_xz(Index i, Index j) const;
  double dist_z(Index i, Index j) const;
  double estimate_cached(const Vector& y) const;
  double estimate_direct(const Vector& y) const;

  Matrix x_;
  Matrix z_;
  Vector y_;
  Index k_;
  bool cached_ = false;
  // Per row i, the other rows sorted by distance in (x, z) and in z, with the
  // matching distances; row-major blocks of n - 1 entries.
  std::vector<std::int32_t> order_xz_;
  std::vector<double> sorted_xz_;
  std::vector<std::int32_t> order_z_;
  std::vector<double> sorted_z_;
  std::vector<double> psi_;  // psi(m) for m = 0..n+1 (psi_[0] unused)
};

double cmi_estimate(const FeatureSample& sample, const CmiParams& params);

struct LocalPermutations {
  std::vector<Vector> permuted_y;
  std::vector<std::vector<Index>> donors;  // donors[m][i]: row whose y lands at i
  Index fallback_count = 0;                // draws made with replacement
};

// Each draw visits the rows in random order; row i takes a donor uniformly
// from its k_perm nearest rows in Z (itself included, ties at the boundary
// distance included) that are still unused, or uniformly from the whole
// neighbourhood when all are used. With an empty Z every row is a neighbour.
LocalPermutations local_permutation_scheme(const Matrix& z, const Vector& y, Index k_perm,
                                           Index num_permutations, std::uint64_t seed);

TestOutcome cmiknn_test(const FeatureSample& sample, const CmiParams& params, double alpha);

}  // namespace dncit
