#include "dncit/wald.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include <boost/math/distributions/fisher_f.hpp>

#include "dncit/linear_model.hpp"

namespace dncit {

Matrix expand_design(const Matrix& z, const std::vector<ColumnKind>& kinds, ZExpansion expansion) {
  if (expansion == ZExpansion::kNone || z.cols() == 0) return z;
  std::vector<Index> cont;
  for (Index j = 0; j < z.cols(); ++j) {
    if (kinds.empty() || kinds[static_cast<std::size_t>(j)] == ColumnKind::kContinuous) cont.push_back(j);
  }
  std::vector<Vector> extra;
  for (std::size_t a = 0; a < cont.size(); ++a) {
    extra.push_back(z.col(cont[a]).array().square());
    if (expansion == ZExpansion::kSquaresAndInteractions) {
      for (std::size_t b = a + 1; b < cont.size(); ++b) {
        extra.push_back(z.col(cont[a]).cwiseProduct(z.col(cont[b])));
      }
    }
  }
  Matrix out(z.rows(), z.cols() + static_cast<Index>(extra.size()));
  out.leftCols(z.cols()) = z;
  for (std::size_t e = 0; e < extra.size(); ++e) out.col(z.cols() + static_cast<Index>(e)) = extra[e];
  return out;
}

TestOutcome wald_test(const FeatureSample& sample, const WaldParams& params, double alpha) {
  const auto start = std::chrono::steady_clock::now();
  const Index n = sample.n();
  const Matrix z = expand_design(sample.z(), sample.z_kinds(), params.expansion);
  const Index q = sample.q();
  if (n <= q + z.cols() + 1) {
    throw Error(ErrorCode::kTooFewRows, "Wald test needs n > q + p + 1");
  }
  // Reduced model [1, Z]; then the X block after projecting out the reduced design.
  const LeastSquaresFit reduced = least_squares(with_intercept(z), sample.y());
  const LeastSquaresFit x_on_z = least_squares(with_intercept(z), sample.x());
  // A feature inside span[1, Z] leaves rounding noise, which a relative rank
  // threshold would keep; judge it against the column's own scale instead.
  Matrix x_resid = x_on_z.residuals;
  for (Index j = 0; j < q; ++j) {
    if (x_resid.col(j).norm() <= 1e-9 * sample.x().col(j).norm()) x_resid.col(j).setZero();
  }
  const LeastSquaresFit added = least_squares(x_resid, reduced.residuals);
  const Index q_eff = added.rank();
  if (q_eff == 0) {
    throw Error(ErrorCode::kRankDeficient, "every feature column is collinear with [1, Z]");
  }
  const double rss_r = reduced.residuals.squaredNorm();
  const double rss_f = added.residuals.squaredNorm();
  const double df2 = static_cast<double>(n - reduced.rank() - q_eff);
  if (df2 < 1.0) throw Error(ErrorCode::kTooFewRows, "no residual degrees of freedom");
  double f_stat;
  double p;
  if (rss_f <= 0.0) {
    f_stat = std::numeric_limits<double>::infinity();
    p = 0.0;
  } else {
    f_stat = ((rss_r - rss_f) / static_cast<double>(q_eff)) / (rss_f / df2);
    f_stat = std::max(f_stat, 0.0);
    const boost::math::fisher_f dist(static_cast<double>(q_eff), df2);
    p = boost::math::cdf(boost::math::complement(dist, f_stat));
  }
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  ParamMap resolved{
      {"variant", std::string("F")},
      {"df1", static_cast<double>(q_eff)},
      {"df2", df2},
      {"dropped_features", static_cast<double>(q - q_eff)},
      {"dropped_confounders", static_cast<double>(reduced.dropped.size())},
      {"expansion", std::string(params.expansion == ZExpansion::kNone      ? "none"
                                : params.expansion == ZExpansion::kSquares ? "squares"
                                                                           : "squares_interactions")},
  };
  return make_outcome(Method::kWald, f_stat, p, alpha, std::move(resolved), 0, ms);
}

}  // namespace dncit
