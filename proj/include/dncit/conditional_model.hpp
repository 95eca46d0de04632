#pragma once

#include <string>
#include <vector>

#include "dncit/common.hpp"
#include "dncit/data_model.hpp"

namespace dncit {

// How one confounder column enters the additive model.
struct BasisTerm {
  enum class Kind { kSmooth, kLinear, kIndicators };
  Kind kind = Kind::kSmooth;
  Index source_column = 0;
  Index first_column = 0;  // position in the design matrix
  Index width = 0;
  std::vector<double> knots;   // full knot vector for kSmooth
  std::vector<double> levels;  // non-reference levels for kIndicators
};

// Gaussian model for Y | Z: a homoscedastic normal with additive mean.
struct ConditionalModel {
  std::vector<BasisTerm> terms;
  Vector coefficients;
  Vector fitted_means;
  double sigma2 = 1.0;
  double penalty = 0.0;
  double effective_dof = 1.0;
  std::vector<std::string> warnings;

  // A model with known means and variance, e.g. the true law in a simulation.
  static ConditionalModel from_truth(Vector means, double sigma2);

  double log_density(double y, Index row) const;
};

// Cubic B-spline basis values at x for the given full knot vector.
Vector bspline_basis(double x, const std::vector<double>& knots);

// Penalised least squares of y on an additive basis of z: cubic B-splines
// with 8 interior knots at equispaced quantiles for continuous columns
// (second-difference penalty, sum-to-zero constraint), one indicator per
// non-reference level for categorical columns, and plain linear terms for
// columns with too few distinct values for a spline. A single penalty weight
// is chosen by GCV over a fixed 20-point log grid. sigma2 = RSS / (n - edf).
// p == 0 gives the intercept-only model.
ConditionalModel fit_conditional_model(const Vector& y, const Matrix& z,
                                       const std::vector<ColumnKind>& kinds);

}  // namespace dncit
