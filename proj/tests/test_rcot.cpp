#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "dncit/rcot.hpp"
#include "dncit/sim_harness.hpp"
#include "support.hpp"

using namespace dncit;

namespace {

double ks_uniform(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  const double n = static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    d = std::max({d, std::abs(p[i] - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - p[i])});
  }
  return d;
}

// z-scores of a 4-vector with the n-1 denominator, by hand.
std::array<double, 4> zscore(std::array<double, 4> v) {
  const double mean = (v[0] + v[1] + v[2] + v[3]) / 4.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / 3.0);
  for (double& x : v) x = (x - mean) / sd;
  return v;
}

}  // namespace

TEST_CASE("4-row hand case with one feature per block") {
  const std::array<double, 4> a_raw{0.3, -1.2, 2.0, 0.7};
  const std::array<double, 4> b_raw{1.0, 0.5, -0.4, 2.2};
  const std::array<double, 4> c_raw{-0.6, 0.1, 1.4, 0.9};
  const double lambda = 0.1;

  const auto a = zscore(a_raw), b = zscore(b_raw), c = zscore(c_raw);
  double cc = 0.0, ca = 0.0, cb = 0.0;
  for (int i = 0; i < 4; ++i) {
    cc += c[i] * c[i];
    ca += c[i] * a[i];
    cb += c[i] * b[i];
  }
  double cross = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double ar = a[i] - c[i] * ca / (cc + lambda);
    const double br = b[i] - c[i] * cb / (cc + lambda);
    cross += ar * br;
  }
  const double expected = 4.0 * (cross / 3.0) * (cross / 3.0);

  Matrix am(4, 1), bm(4, 1), cm(4, 1);
  for (int i = 0; i < 4; ++i) {
    am(i, 0) = a_raw[static_cast<std::size_t>(i)];
    bm(i, 0) = b_raw[static_cast<std::size_t>(i)];
    cm(i, 0) = c_raw[static_cast<std::size_t>(i)];
  }
  const RcotStatistic s = rcot_statistic_from_features(am, bm, cm, lambda);
  CHECK(std::abs(s.statistic - expected) < 1e-10);
  CHECK(s.residual_products.cols() == 1);
}

TEST_CASE("without Z the residuals are the centred standardised features") {
  const Matrix a = testing::normal_matrix(30, 2, 1);
  const Matrix b = testing::normal_matrix(30, 3, 2);
  const RcotStatistic s = rcot_statistic_from_features(a, b, Matrix(30, 0), 0.1);
  const Matrix as = standardize_columns(a).values;
  const Matrix bs = standardize_columns(b).values;
  const Matrix cov = as.transpose() * bs / 29.0;
  CHECK(s.statistic == doctest::Approx(30.0 * cov.squaredNorm()).epsilon(1e-12));
  // Column j*b + k of the product block.
  CHECK((s.residual_products.col(1 * 3 + 2) - as.col(1).cwiseProduct(bs.col(2))).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("weighted chi-square tail") {
  Vector one(1);
  one << 1.0;
  CHECK(weighted_chisq_upper_tail(3.841458820694124, one) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(weighted_chisq_upper_tail(6.634896601021214, one) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(weighted_chisq_upper_tail(0.0, one) == 1.0);
  // Sum of two unit-weight chi^2_1 is chi^2_2 with survival exp(-x/2).
  Vector two = Vector::Ones(2);
  CHECK(weighted_chisq_upper_tail(4.0, two) == doctest::Approx(std::exp(-2.0)).epsilon(1e-6));
}

TEST_CASE("statistic zero gives p = 1") {
  RcotStatistic s;
  s.statistic = 0.0;
  s.residual_products = testing::normal_matrix(20, 4, 3);
  CHECK(rcot_pvalue(s, RcotParams{}) == 1.0);
}

TEST_CASE("X equal to Y without Z rejects strongly") {
  const Vector y = testing::normal_vector(500, 5);
  const FeatureSample s(Matrix(y), y);
  const TestOutcome o = rcot_test(s, RcotParams{}, 0.05);
  CHECK(o.p_value < 1e-6);
  CHECK(o.reject);
}

TEST_CASE("constant Y is degenerate") {
  const FeatureSample s(testing::normal_matrix(50, 2, 1), Vector::Constant(50, 3.0));
  try {
    rcot_test(s, RcotParams{}, 0.05);
    FAIL("expected DegenerateY");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateY);
  }
}

TEST_CASE("independent X and Y without Z: p-values are close to uniform") {
  std::vector<double> p;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const FeatureSample s(testing::normal_matrix(500, 3, 1000 + seed), testing::normal_vector(500, 9000 + seed));
    RcotParams params;
    params.seed = seed;
    p.push_back(rcot_test(s, params, 0.05).p_value);
  }
  CHECK(ks_uniform(p) < 0.08);
}

TEST_CASE("moment match agrees with the permutation null") {
  std::vector<double> diffs;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Matrix z = testing::normal_matrix(200, 2, 30 + seed);
    Matrix x = testing::normal_matrix(200, 3, 60 + seed);
    x.col(0) += z.col(0);
    Vector y = testing::normal_vector(200, 90 + seed);
    y += z.col(0);
    const FeatureSample s(x, y, z);
    RcotParams mm;
    mm.seed = seed;
    RcotParams perm = mm;
    perm.null_method = RcotNull::kPermutation;
    diffs.push_back(std::abs(rcot_test(s, mm, 0.05).p_value - rcot_test(s, perm, 0.05).p_value));
  }
  std::nth_element(diffs.begin(), diffs.begin() + 25, diffs.end());
  CHECK(diffs[25] <= 0.05);
}

TEST_CASE("statistic invariances") {
  const Matrix z = testing::normal_matrix(120, 2, 1);
  Matrix x = testing::normal_matrix(120, 4, 2);
  const Vector y = testing::normal_vector(120, 3) + x.col(0);
  RcotParams params;
  params.seed = 17;
  const double base = rcot_statistic(FeatureSample(x, y, z), params).statistic;

  // Simultaneous row permutation.
  std::vector<Index> perm(120);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::reverse(perm.begin(), perm.end());
  std::rotate(perm.begin(), perm.begin() + 7, perm.end());
  Matrix xp(120, 4), zp(120, 2);
  Vector yp(120);
  for (Index i = 0; i < 120; ++i) {
    xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    zp.row(i) = z.row(perm[static_cast<std::size_t>(i)]);
    yp(i) = y(perm[static_cast<std::size_t>(i)]);
  }
  // Equal up to floating-point summation order.
  CHECK(rcot_statistic(FeatureSample(xp, yp, zp), params).statistic == doctest::Approx(base).epsilon(1e-10));

  // Affine rescaling of one column.
  Matrix xs = x;
  xs.col(2) = xs.col(2) * 12.5 + Vector::Constant(120, -3.0);
  CHECK(rcot_statistic(FeatureSample(xs, y, z), params).statistic == doctest::Approx(base).epsilon(1e-8));
}

TEST_CASE("calibrated under linear confounding at n = 2000") {
  DgmConfig dgm;
  dgm.id = "rcot_linear";
  dgm.n = 2000;
  dgm.conf_dim = 1;
  dgm.g_z_kind = GzKind::kLinear;
  dgm.c = 0;
  MethodSpec rcot;
  rcot.method = Method::kRcot;
  const auto results = run_campaign(dgm, {rcot}, 200, 0.05, 2024, 1);
  REQUIRE(results.size() == 1);
  CHECK(results[0].n_ok == 200);
  CHECK(results[0].rejection_rate >= 0.02);
  CHECK(results[0].rejection_rate <= 0.09);
}
