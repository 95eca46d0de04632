#include "dncit/rcot.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include <boost/math/special_functions/gamma.hpp>

#include "dncit/kernels.hpp"

namespace dncit {

void validate(const RcotParams& p) {
  if (p.num_f_x < 1 || p.num_f_y < 1 || p.num_f_z < 1) {
    throw Error(ErrorCode::kInvalidArgument, "RCoT feature counts must be >= 1");
  }
  if (!(p.ridge_lambda > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "RCoT ridge lambda must be positive");
  }
  if (p.null_method == RcotNull::kPermutation && p.num_permutations < 1) {
    throw Error(ErrorCode::kInvalidArgument, "permutation null needs at least one permutation");
  }
}

namespace {

Matrix residualize(const Matrix& target, const Matrix& c, const Eigen::LDLT<Matrix>* solver) {
  if (c.cols() == 0 || solver == nullptr) return target;
  return target - c * solver->solve(c.transpose() * target);
}

Matrix products(const Matrix& a_res, const Matrix& b_res) {
  const Index n = a_res.rows();
  const Index a = a_res.cols();
  const Index b = b_res.cols();
  Matrix out(n, a * b);
  for (Index j = 0; j < a; ++j) {
    for (Index k = 0; k < b; ++k) out.col(j * b + k) = a_res.col(j).cwiseProduct(b_res.col(k));
  }
  return out;
}

double trace_statistic(const Matrix& a_res, const Matrix& b_res) {
  const double n = static_cast<double>(a_res.rows());
  const Matrix cov = a_res.transpose() * b_res / (n - 1.0);
  return n * cov.squaredNorm();
}

}  // namespace

RcotStatistic rcot_statistic_from_features(const Matrix& a, const Matrix& b, const Matrix& c,
                                           double ridge_lambda) {
  const Index n = a.rows();
  if (b.rows() != n || (c.cols() > 0 && c.rows() != n)) {
    throw Error(ErrorCode::kRowMismatch, "feature blocks differ in row count");
  }
  if (n <= 2) throw Error(ErrorCode::kTooFewRows, "RCoT needs n > 2");
  const Matrix as = standardize_columns(a).values;
  const Matrix bs = standardize_columns(b).values;
  RcotStatistic out;
  if (c.cols() > 0) {
    const Matrix cs = standardize_columns(c).values;
    Matrix gram = cs.transpose() * cs;
    gram.diagonal().array() += ridge_lambda;
    const Eigen::LDLT<Matrix> solver(gram);
    out.a_residuals = residualize(as, cs, &solver);
    out.b_residuals = residualize(bs, cs, &solver);
  } else {
    out.a_residuals = as;
    out.b_residuals = bs;
  }
  out.statistic = trace_statistic(out.a_residuals, out.b_residuals);
  out.residual_products = products(out.a_residuals, out.b_residuals);
  return out;
}

RcotStatistic rcot_statistic_blocks(const Matrix& x, const Matrix& y, const Matrix& z,
                                    const RcotParams& params) {
  validate(params);
  const Index n = x.rows();
  if (y.rows() != n || (z.cols() > 0 && z.rows() != n)) {
    throw Error(ErrorCode::kRowMismatch, "RCoT inputs differ in row count");
  }
  if (n <= 2) throw Error(ErrorCode::kTooFewRows, "RCoT needs n > 2");
  const Standardized ys = standardize_columns(y);
  if ((ys.sds.array() == 0.0).all()) {
    throw Error(ErrorCode::kDegenerateY, "Y has zero variance");
  }
  const Matrix xs = standardize_columns(x).values;
  const double sigma_x = median_heuristic(xs, params.bandwidth_rows);
  const double sigma_y = median_heuristic(ys.values, params.bandwidth_rows);
  const Matrix a = rff_features(sample_rff(xs.cols(), params.num_f_x, sigma_x,
                                           derive_seed(params.seed, 1)), xs);
  const Matrix b = rff_features(sample_rff(ys.values.cols(), params.num_f_y, sigma_y,
                                           derive_seed(params.seed, 2)), ys.values);
  Matrix c(n, 0);
  double sigma_z = 0.0;
  if (z.cols() > 0) {
    const Matrix zs = standardize_columns(z).values;
    sigma_z = median_heuristic(zs, params.bandwidth_rows);
    c = rff_features(sample_rff(zs.cols(), params.num_f_z, sigma_z, derive_seed(params.seed, 3)),
                     zs);
  }
  RcotStatistic out = rcot_statistic_from_features(a, b, c, params.ridge_lambda);
  out.sigma_x = sigma_x;
  out.sigma_y = sigma_y;
  out.sigma_z = sigma_z;
  return out;
}

RcotStatistic rcot_statistic(const FeatureSample& sample, const RcotParams& params) {
  return rcot_statistic_blocks(sample.x(), sample.y(), sample.z(), params);
}

double weighted_chisq_upper_tail(double x, const Vector& lambdas) {
  double k1 = 0.0, s2 = 0.0, s3 = 0.0;
  for (Index i = 0; i < lambdas.size(); ++i) {
    const double l = lambdas(i);
    if (!(l > 0.0)) continue;
    k1 += l;
    s2 += l * l;
    s3 += l * l * l;
  }
  if (s2 <= 0.0) return x > 0.0 ? 0.0 : 1.0;
  // Cumulants of sum lambda_i chi^2_1: k1 = sum l, k2 = 2 sum l^2, k3 = 8 sum l^3.
  // A gamma(shape, scale) has k2 = shape scale^2 and k3 = 2 shape scale^3.
  const double k2 = 2.0 * s2;
  const double k3 = 8.0 * s3;
  const double scale = k3 / (2.0 * k2);
  const double shape = k2 / (scale * scale);
  const double shift = k1 - shape * scale;
  const double t = (x - shift) / scale;
  if (t <= 0.0) return 1.0;
  return boost::math::gamma_q(shape, t);
}

double rcot_pvalue(const RcotStatistic& stat, const RcotParams& params) {
  if (stat.residual_products.size() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "residual products are empty");
  }
  if (stat.statistic <= 0.0) return 1.0;
  const Index n = stat.residual_products.rows();
  if (params.null_method == RcotNull::kMomentMatch) {
    const Matrix cov =
        stat.residual_products.transpose() * stat.residual_products / static_cast<double>(n);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
    return weighted_chisq_upper_tail(stat.statistic, eig.eigenvalues());
  }
  std::mt19937_64 rng(derive_seed(params.seed, 7));
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Matrix b_perm(n, stat.b_residuals.cols());
  Index exceed = 0;
  for (Index m = 0; m < params.num_permutations; ++m) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Index i = 0; i < n; ++i) b_perm.row(i) = stat.b_residuals.row(perm[static_cast<std::size_t>(i)]);
    if (trace_statistic(stat.a_residuals, b_perm) >= stat.statistic) ++exceed;
  }
  return static_cast<double>(1 + exceed) / static_cast<double>(1 + params.num_permutations);
}

TestOutcome rcot_test_blocks(const Matrix& x, const Matrix& y, const Matrix& z,
                             const RcotParams& params, double alpha) {
  const auto start = std::chrono::steady_clock::now();
  const RcotStatistic stat = rcot_statistic_blocks(x, y, z, params);
  const double p = rcot_pvalue(stat, params);
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  ParamMap resolved{
      {"a", static_cast<double>(params.num_f_x)},
      {"b", static_cast<double>(params.num_f_y)},
      {"c", static_cast<double>(params.num_f_z)},
      {"lambda", params.ridge_lambda},
      {"sigma_x", stat.sigma_x},
      {"sigma_y", stat.sigma_y},
      {"sigma_z", stat.sigma_z},
      {"bandwidth", std::string("median_heuristic")},
      {"null_method",
       std::string(params.null_method == RcotNull::kMomentMatch ? "moment_match" : "permutation")},
  };
  if (params.null_method == RcotNull::kPermutation) {
    resolved["num_permutations"] = static_cast<double>(params.num_permutations);
  }
  return make_outcome(Method::kRcot, stat.statistic, p, alpha, std::move(resolved), params.seed,
                      ms);
}

TestOutcome rcot_test(const FeatureSample& sample, const RcotParams& params, double alpha) {
  return rcot_test_blocks(sample.x(), sample.y(), sample.z(), params, alpha);
}

}  // namespace dncit
