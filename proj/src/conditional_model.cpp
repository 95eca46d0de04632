#include "dncit/conditional_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace dncit {

namespace {

constexpr int kDegree = 3;
constexpr int kInteriorKnots = 8;
constexpr int kGridPoints = 20;
// Columns with fewer distinct values than this enter linearly.
constexpr std::size_t kMinDistinctForSpline = 12;

double quantile(std::vector<double> sorted, double prob) {
  const double pos = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

std::vector<double> make_knots(const Vector& column) {
  std::vector<double> sorted(column.data(), column.data() + column.size());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  const double hi = sorted.back();
  std::vector<double> interior;
  for (int k = 1; k <= kInteriorKnots; ++k) {
    const double v = quantile(sorted, static_cast<double>(k) / (kInteriorKnots + 1));
    if (v > lo && v < hi && (interior.empty() || v > interior.back())) interior.push_back(v);
  }
  if (interior.size() < 4) return {};
  std::vector<double> knots(kDegree + 1, lo);
  knots.insert(knots.end(), interior.begin(), interior.end());
  knots.insert(knots.end(), kDegree + 1, hi);
  return knots;
}

// Orthonormal basis of the complement of the constant vector in R^m.
Matrix constraint_null_space(Index m) {
  Matrix ones = Matrix::Ones(m, 1);
  Eigen::HouseholderQR<Matrix> qr(ones);
  Matrix q = qr.householderQ() * Matrix::Identity(m, m);
  return q.rightCols(m - 1);
}

Matrix second_difference(Index m) {
  Matrix d = Matrix::Zero(m - 2, m);
  for (Index i = 0; i < m - 2; ++i) {
    d(i, i) = 1.0;
    d(i, i + 1) = -2.0;
    d(i, i + 2) = 1.0;
  }
  return d;
}

}  // namespace

Vector bspline_basis(double x, const std::vector<double>& knots) {
  const Index nb = static_cast<Index>(knots.size()) - kDegree - 1;
  if (nb < kDegree + 1) throw Error(ErrorCode::kInvalidArgument, "too few knots for a cubic basis");
  const double lo = knots[kDegree];
  const double hi = knots[static_cast<std::size_t>(nb)];
  x = std::clamp(x, lo, hi);
  // Knot span s with knots[s] <= x < knots[s+1], closing the last interval.
  Index span = nb - 1;
  if (x < hi) {
    span = kDegree;
    while (span + 1 < nb && knots[static_cast<std::size_t>(span + 1)] <= x) ++span;
  }
  double left[kDegree + 1];
  double right[kDegree + 1];
  double basis[kDegree + 1];
  basis[0] = 1.0;
  for (int j = 1; j <= kDegree; ++j) {
    left[j] = x - knots[static_cast<std::size_t>(span + 1 - j)];
    right[j] = knots[static_cast<std::size_t>(span + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = basis[r] / (right[r + 1] + left[j - r]);
      basis[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    basis[j] = saved;
  }
  Vector out = Vector::Zero(nb);
  for (int r = 0; r <= kDegree; ++r) out(span - kDegree + r) = basis[r];
  return out;
}

ConditionalModel ConditionalModel::from_truth(Vector means, double sigma2) {
  if (!(sigma2 > 0.0)) throw Error(ErrorCode::kNonPositive, "sigma2 must be positive");
  if (!means.allFinite()) throw Error(ErrorCode::kNonNumeric, "fitted means must be finite");
  ConditionalModel model;
  model.fitted_means = std::move(means);
  model.sigma2 = sigma2;
  model.effective_dof = 0.0;
  return model;
}

double ConditionalModel::log_density(double y, Index row) const {
  const double r = y - fitted_means(row);
  return -0.5 * r * r / sigma2 - 0.5 * std::log(2.0 * std::numbers::pi * sigma2);
}

ConditionalModel fit_conditional_model(const Vector& y, const Matrix& z,
                                       const std::vector<ColumnKind>& kinds) {
  const Index n = y.size();
  if (z.cols() > 0 && z.rows() != n) throw Error(ErrorCode::kRowMismatch, "y and z differ in rows");
  if (!kinds.empty() && static_cast<Index>(kinds.size()) != z.cols()) {
    throw Error(ErrorCode::kDimMismatch, "column kinds do not match z");
  }
  if (n < 3) throw Error(ErrorCode::kTooFewRows, "conditional model needs n >= 3");

  ConditionalModel model;
  // Assemble design blocks column by column.
  std::vector<Vector> columns;
  std::vector<std::pair<Index, Matrix>> penalties;  // (first column, block)
  columns.push_back(Vector::Ones(n));

  for (Index j = 0; j < z.cols(); ++j) {
    const Vector col = z.col(j);
    std::set<double> distinct(col.data(), col.data() + n);
    const bool categorical = !kinds.empty() && kinds[static_cast<std::size_t>(j)] == ColumnKind::kCategoricalEncoded;
    BasisTerm term;
    term.source_column = j;
    term.first_column = static_cast<Index>(columns.size());
    if (distinct.size() < 2) {
      model.warnings.push_back("z column " + std::to_string(j) + " is constant and was dropped");
      continue;
    }
    if (categorical) {
      term.kind = BasisTerm::Kind::kIndicators;
      for (auto it = std::next(distinct.begin()); it != distinct.end(); ++it) {
        Vector ind(n);
        for (Index i = 0; i < n; ++i) ind(i) = col(i) == *it ? 1.0 : 0.0;
        columns.push_back(std::move(ind));
        term.levels.push_back(*it);
      }
    } else {
      std::vector<double> knots;
      if (distinct.size() >= kMinDistinctForSpline) knots = make_knots(col);
      if (knots.empty()) {
        term.kind = BasisTerm::Kind::kLinear;
        columns.push_back(col.array() - col.mean());
      } else {
        term.kind = BasisTerm::Kind::kSmooth;
        term.knots = knots;
        const Index nb = static_cast<Index>(knots.size()) - kDegree - 1;
        Matrix raw(n, nb);
        for (Index i = 0; i < n; ++i) raw.row(i) = bspline_basis(col(i), knots).transpose();
        raw.rowwise() -= raw.colwise().mean();
        const Matrix q2 = constraint_null_space(nb);
        const Matrix constrained = raw * q2;
        const Matrix d2 = second_difference(nb) * q2;
        for (Index c = 0; c < constrained.cols(); ++c) columns.push_back(constrained.col(c));
        penalties.emplace_back(term.first_column, d2.transpose() * d2);
      }
    }
    term.width = static_cast<Index>(columns.size()) - term.first_column;
    model.terms.push_back(std::move(term));
  }

  const Index total = static_cast<Index>(columns.size());
  if (n <= total) {
    throw Error(ErrorCode::kTooFewRows, "conditional model has " + std::to_string(total) +
                                            " basis columns but only " + std::to_string(n) +
                                            " rows");
  }
  Matrix design(n, total);
  for (Index c = 0; c < total; ++c) design.col(c) = columns[static_cast<std::size_t>(c)];
  Matrix penalty = Matrix::Zero(total, total);
  for (const auto& [first, block] : penalties) {
    penalty.block(first, first, block.rows(), block.cols()) = block;
  }

  // Drop collinear columns, keeping the leading pivots.
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-10);
  std::vector<Index> kept;
  if (qr.rank() < total) {
    for (Index r = 0; r < qr.rank(); ++r) kept.push_back(qr.colsPermutation().indices()(r));
    std::sort(kept.begin(), kept.end());
    model.warnings.push_back("SingularBasis: dropped " + std::to_string(total - qr.rank()) +
                             " collinear basis columns");
  } else {
    for (Index c = 0; c < total; ++c) kept.push_back(c);
  }
  const Index k = static_cast<Index>(kept.size());
  Matrix x(n, k);
  Matrix s(k, k);
  for (Index a = 0; a < k; ++a) {
    x.col(a) = design.col(kept[static_cast<std::size_t>(a)]);
    for (Index b = 0; b < k; ++b) {
      s(a, b) = penalty(kept[static_cast<std::size_t>(a)], kept[static_cast<std::size_t>(b)]);
    }
  }

  const Matrix xtx = x.transpose() * x;
  const Vector xty = x.transpose() * y;
  const double s_trace = s.trace();
  std::vector<double> grid;
  if (s_trace > 0.0) {
    const double scale = xtx.trace() / s_trace;
    for (int g = 0; g < kGridPoints; ++g) {
      grid.push_back(scale * std::pow(10.0, -6.0 + 9.0 * g / (kGridPoints - 1)));
    }
  } else {
    grid.push_back(0.0);
  }

  double best_gcv = std::numeric_limits<double>::infinity();
  Vector best_beta;
  double best_rss = 0.0, best_edf = 0.0, best_lambda = 0.0;
  for (double lambda : grid) {
    Matrix lhs = xtx + lambda * s;
    const Eigen::LDLT<Matrix> solver(lhs);
    const Vector beta = solver.solve(xty);
    const double edf = solver.solve(xtx).trace();
    const double rss = (y - x * beta).squaredNorm();
    const double denom = static_cast<double>(n) - edf;
    if (!(denom > 0.0)) continue;
    const double gcv = static_cast<double>(n) * rss / (denom * denom);
    if (gcv < best_gcv) {
      best_gcv = gcv;
      best_beta = beta;
      best_rss = rss;
      best_edf = edf;
      best_lambda = lambda;
    }
  }
  if (best_beta.size() == 0) throw Error(ErrorCode::kRankDeficient, "GCV found no admissible fit");

  model.coefficients = Vector::Zero(total);
  for (Index a = 0; a < k; ++a) model.coefficients(kept[static_cast<std::size_t>(a)]) = best_beta(a);
  model.fitted_means = x * best_beta;
  model.effective_dof = best_edf;
  model.penalty = best_lambda;
  model.sigma2 = best_rss / (static_cast<double>(n) - best_edf);
  if (!(model.sigma2 > 0.0)) {
    model.sigma2 = std::numeric_limits<double>::min();
    model.warnings.push_back("residual variance is zero; clamped");
  }
  return model;
}

}  // namespace dncit
