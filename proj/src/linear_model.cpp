#include "dncit/linear_model.hpp"

#include <algorithm>

namespace dncit {

LeastSquaresFit least_squares(const Matrix& design, const Matrix& targets, double rank_threshold) {
  if (design.rows() != targets.rows()) {
    throw Error(ErrorCode::kRowMismatch, "design and targets differ in rows");
  }
  LeastSquaresFit fit;
  fit.coefficients = Matrix::Zero(design.cols(), targets.cols());
  if (design.cols() == 0) {
    fit.residuals = targets;
    return fit;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(rank_threshold);
  const Index rank = qr.rank();
  for (Index r = 0; r < rank; ++r) fit.kept.push_back(qr.colsPermutation().indices()(r));
  std::sort(fit.kept.begin(), fit.kept.end());
  for (Index c = 0; c < design.cols(); ++c) {
    if (!std::binary_search(fit.kept.begin(), fit.kept.end(), c)) fit.dropped.push_back(c);
  }
  if (rank == 0) {
    fit.residuals = targets;
    return fit;
  }
  Matrix reduced(design.rows(), rank);
  for (Index a = 0; a < rank; ++a) reduced.col(a) = design.col(fit.kept[static_cast<std::size_t>(a)]);
  const Matrix beta = reduced.householderQr().solve(targets);
  for (Index a = 0; a < rank; ++a) fit.coefficients.row(fit.kept[static_cast<std::size_t>(a)]) = beta.row(a);
  fit.residuals = targets - reduced * beta;
  return fit;
}

Matrix with_intercept(const Matrix& m) {
  Matrix out(m.rows(), m.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(m.cols()) = m;
  return out;
}

}  // namespace dncit
