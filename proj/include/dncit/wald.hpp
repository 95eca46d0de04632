#pragma once

#include "dncit/common.hpp"
#include "dncit/data_model.hpp"

namespace dncit {

enum class ZExpansion { kNone, kSquares, kSquaresAndInteractions };

struct WaldParams {
  ZExpansion expansion = ZExpansion::kNone;  // applied to continuous Z columns
};

// Adds squares (and pairwise products) of continuous columns.
Matrix expand_design(const Matrix& z, const std::vector<ColumnKind>& kinds, ZExpansion expansion);

// Joint F test that all X coefficients vanish in the OLS of y on [1, Z, X].
// Feature columns collinear with the rest of the design are dropped and
// counted in params["dropped_features"]; the numerator dof is the number of
// surviving feature columns.
TestOutcome wald_test(const FeatureSample& sample, const WaldParams& params, double alpha);

}  // namespace dncit
