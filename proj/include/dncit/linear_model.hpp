#pragma once

#include <vector>

#include "dncit/common.hpp"

namespace dncit {

// Least squares of every target column on the columns of `design`. Columns
// that are numerically dependent on earlier pivots (column-pivoted QR with a
// relative threshold) are dropped and get zero coefficients.
struct LeastSquaresFit {
  Matrix coefficients;  // design.cols() x targets.cols()
  Matrix residuals;
  std::vector<Index> kept;
  std::vector<Index> dropped;

  Index rank() const { return static_cast<Index>(kept.size()); }
};

LeastSquaresFit least_squares(const Matrix& design, const Matrix& targets,
                              double rank_threshold = 1e-10);

// [1 | m]
Matrix with_intercept(const Matrix& m);

}  // namespace dncit
