#include "dncit/kernels.hpp"

#include <algorithm>
#include <numbers>
#include <random>
#include <vector>

namespace dncit {

double gaussian_kernel(const Vector& u, const Vector& v, double sigma) {
  if (u.size() != v.size()) throw Error(ErrorCode::kDimMismatch, "kernel arguments differ in length");
  if (!(sigma > 0.0)) throw Error(ErrorCode::kNonPositive, "kernel bandwidth must be positive");
  return gaussian_kernel_sqdist((u - v).squaredNorm(), sigma);
}

double median_heuristic(const Matrix& m, Index cap) {
  const Index rows = std::min(m.rows(), std::max<Index>(cap, 2));
  if (m.rows() < 2) throw Error(ErrorCode::kTooFewRows, "median heuristic needs n >= 2");
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(rows * (rows - 1) / 2));
  for (Index i = 0; i < rows; ++i) {
    for (Index j = i + 1; j < rows; ++j) dist.push_back((m.row(i) - m.row(j)).norm());
  }
  const std::size_t half = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(half), dist.end());
  double median = dist[half];
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(half));
    median = 0.5 * (median + lower);
  }
  if (median > 0.0) return median;
  double smallest = 0.0;
  for (double d : dist) {
    if (d > 0.0 && (smallest == 0.0 || d < smallest)) smallest = d;
  }
  return smallest > 0.0 ? smallest : 1.0;
}

RffBasis sample_rff(Index d, Index m, double sigma, std::uint64_t seed) {
  if (d < 1 || m < 1) throw Error(ErrorCode::kInvalidArgument, "RFF dimensions must be positive");
  if (!(sigma > 0.0)) throw Error(ErrorCode::kNonPositive, "RFF bandwidth must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / sigma);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  RffBasis basis{Matrix(d, m), Vector(m), sigma};
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < d; ++i) basis.w(i, j) = normal(rng);
  }
  for (Index j = 0; j < m; ++j) {
    double b = phase(rng);
    // uniform_real_distribution may round up to its upper bound.
    if (b >= 2.0 * std::numbers::pi) b = 0.0;
    basis.b(j) = b;
  }
  return basis;
}

Matrix rff_features(const RffBasis& basis, const Matrix& m) {
  if (m.cols() != basis.d()) throw Error(ErrorCode::kDimMismatch, "RFF basis dimension mismatch");
  Matrix proj = m * basis.w;
  proj.rowwise() += basis.b.transpose();
  return std::numbers::sqrt2 * proj.array().cos().matrix();
}

}  // namespace dncit
