#pragma once

#include "dncit/common.hpp"

namespace dncit {

// exp(-||u - v||^2 / (2 sigma^2)).
double gaussian_kernel(const Vector& u, const Vector& v, double sigma);

inline double gaussian_kernel_sqdist(double squared_distance, double sigma) {
  return std::exp(-squared_distance / (2.0 * sigma * sigma));
}

// Median pairwise Euclidean distance over the first min(n, cap) rows. Falls
// back to the smallest positive distance when the median is zero, and to 1
// when every distance is zero.
double median_heuristic(const Matrix& m, Index cap = 500);

struct RffBasis {
  Matrix w;  // d x m frequencies, entries N(0, 1/sigma^2)
  Vector b;  // m phases in [0, 2 pi)
  double sigma = 1.0;

  Index d() const { return w.rows(); }
  Index m() const { return w.cols(); }
};

RffBasis sample_rff(Index d, Index m, double sigma, std::uint64_t seed);

// Entry (i, j) = sqrt(2) cos(w_j . x_i + b_j), so that phi(x).phi(y) / m
// approximates gaussian_kernel(x, y, sigma).
Matrix rff_features(const RffBasis& basis, const Matrix& m);

}  // namespace dncit
