#include <doctest.h>

#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <map>
#include <set>

#include "dncit/cmiknn.hpp"
#include "support.hpp"

using namespace dncit;

namespace {

double cheb(const Matrix& m, Index i, Index j) {
  return m.cols() == 0 ? 0.0 : (m.row(i) - m.row(j)).cwiseAbs().maxCoeff();
}

// Direct evaluation of the estimator from its definition; inputs are the
// already-standardised columns (noise_scale = 0).
double reference_cmi(const Matrix& x, const Vector& y, const Matrix& z, Index k) {
  const Index n = y.size();
  using boost::math::digamma;
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    std::vector<double> d;
    for (Index j = 0; j < n; ++j) {
      if (j != i) d.push_back(std::max({cheb(x, i, j), cheb(z, i, j), std::abs(y(i) - y(j))}));
    }
    std::sort(d.begin(), d.end());
    const double eps = d[static_cast<std::size_t>(k - 1)];
    double n_xz = 1, n_yz = 1, n_z = 1, n_x = 0, n_y = 0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const bool in_z = cheb(z, i, j) < eps;
      const bool in_x = cheb(x, i, j) < eps;
      const bool in_y = std::abs(y(i) - y(j)) < eps;
      n_z += in_z;
      n_xz += in_z && in_x;
      n_yz += in_z && in_y;
      n_x += in_x;
      n_y += in_y;
    }
    if (z.cols() > 0) {
      acc += digamma(n_z) - digamma(n_xz) - digamma(n_yz);
    } else {
      acc -= digamma(n_x + 1) + digamma(n_y + 1);
    }
  }
  const double base = z.cols() > 0 ? digamma(static_cast<double>(k))
                                   : digamma(static_cast<double>(k)) + digamma(static_cast<double>(n));
  return base + acc / static_cast<double>(n);
}

Matrix standardised(const Matrix& m) { return standardize_columns(m).values; }

}  // namespace

TEST_CASE("digamma against Boost and known values") {
  CHECK(digamma(1.0) == doctest::Approx(-0.5772156649015329).epsilon(1e-13));
  CHECK(digamma(0.5) == doctest::Approx(-0.5772156649015329 - 2.0 * std::log(2.0)).epsilon(1e-13));
  for (double x : {0.01, 0.3, 1.0, 2.5, 5.999, 6.0, 10.0, 77.7, 1e4}) {
    CHECK(digamma(x) == doctest::Approx(boost::math::digamma(x)).epsilon(1e-13));
  }
  CHECK_THROWS_AS(digamma(0.0), Error);
}

TEST_CASE("estimator matches the definition on the cached path, with ties") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Matrix x = testing::normal_matrix(120, 2, 10 + seed);
    Matrix z = testing::normal_matrix(120, seed % 2 == 0 ? 1 : 2, 20 + seed);
    Vector y = testing::normal_vector(120, 30 + seed) + z.col(0);
    if (seed >= 2) {  // coarse grid: many exact distance ties
      x = (x * 2.0).array().round();
      z = (z * 2.0).array().round();
      y = (y * 2.0).array().round();
    }
    const Index k = 3 + static_cast<Index>(seed);
    const CmiEstimator est(x, z, y, k, 0.0, 1);
    const double expected =
        reference_cmi(standardised(x), standardised(Matrix(y)).col(0), standardised(z), k);
    CHECK(est.estimate(est.jittered_y()) == doctest::Approx(expected).epsilon(1e-12));

    const CmiEstimator marginal(x, Matrix(120, 0), y, k, 0.0, 1);
    const double expected_marginal =
        reference_cmi(standardised(x), standardised(Matrix(y)).col(0), Matrix(120, 0), k);
    CHECK(marginal.estimate(marginal.jittered_y()) == doctest::Approx(expected_marginal).epsilon(1e-12));
  }
}

TEST_CASE("estimator matches the definition above the cache limit") {
  const Index n = 2600;
  const Matrix z = testing::normal_matrix(n, 1, 5);
  const Matrix x = testing::normal_matrix(n, 1, 6) + z;
  const Vector y = testing::normal_vector(n, 7) + z.col(0);
  const CmiEstimator est(x, z, y, 20, 0.0, 1);
  const double expected = reference_cmi(standardised(x), standardised(Matrix(y)).col(0), standardised(z), 20);
  CHECK(est.estimate(est.jittered_y()) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("bivariate Gaussian mutual information") {
  for (double rho : {0.0, 0.6, 0.9}) {
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const Vector a = testing::normal_vector(1500, 100 + seed);
      const Vector b = testing::normal_vector(1500, 200 + seed);
      const Vector y = rho * a + std::sqrt(1.0 - rho * rho) * b;
      CmiParams params;
      params.k_cmi = 10;
      params.seed = seed;
      mean += cmi_estimate(FeatureSample(Matrix(a), y), params) / 3.0;
    }
    CHECK(std::abs(mean - (-0.5 * std::log(1.0 - rho * rho))) < 0.05);
  }
}

TEST_CASE("conditional Gaussian mutual information") {
  // X = Z + e1, Y = Z + e2 with corr(e1, e2) = rho: I(X; Y | Z) = -log(1 - rho^2) / 2.
  const double rho = 0.6;
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Vector z = testing::normal_vector(1500, 300 + seed);
    const Vector e1 = testing::normal_vector(1500, 400 + seed);
    const Vector e2 = rho * e1 + std::sqrt(1.0 - rho * rho) * testing::normal_vector(1500, 500 + seed);
    CmiParams params;
    params.k_cmi = 10;
    mean += cmi_estimate(FeatureSample(Matrix(z + e1), z + e2, Matrix(z)), params) / 3.0;
  }
  CHECK(std::abs(mean - (-0.5 * std::log(1.0 - rho * rho))) < 0.05);
}

TEST_CASE("local permutations without Z are uniform") {
  Vector y(3);
  y << 1.0, 2.0, 3.0;
  const LocalPermutations perms = local_permutation_scheme(Matrix(3, 0), y, 3, 12000, 4);
  CHECK(perms.fallback_count == 0);
  std::map<std::vector<Index>, int> counts;
  for (const auto& d : perms.donors) ++counts[d];
  REQUIRE(counts.size() == 6);
  double chi2 = 0.0;
  for (const auto& [d, c] : counts) chi2 += (c - 2000.0) * (c - 2000.0) / 2000.0;
  CHECK(chi2 < 15.086);  // chi^2_5 upper 1% point
}

TEST_CASE("local permutations respect the neighbourhoods") {
  SUBCASE("k_perm = 1 with distinct Z is the identity") {
    const Matrix z = testing::normal_matrix(30, 2, 1);
    const auto perms = local_permutation_scheme(z, testing::normal_vector(30, 2), 1, 5, 3);
    for (const auto& d : perms.donors) {
      for (Index i = 0; i < 30; ++i) CHECK(d[static_cast<std::size_t>(i)] == i);
    }
  }
  SUBCASE("ties at the boundary are included") {
    Matrix z(4, 1);
    z << 0, 0, 5, 5;
    Vector y(4);
    y << 1, 2, 3, 4;
    const auto perms = local_permutation_scheme(z, y, 1, 2000, 7);
    std::set<Index> seen_for_0;
    for (const auto& d : perms.donors) {
      seen_for_0.insert(d[0]);
      CHECK((d[0] <= 1 && d[1] <= 1 && d[2] >= 2 && d[3] >= 2));
    }
    CHECK(seen_for_0 == std::set<Index>{0, 1});
  }
  SUBCASE("donors come from the k_perm nearest rows") {
    const Matrix z = testing::normal_matrix(80, 1, 9);
    const Vector y = testing::normal_vector(80, 10);
    const auto perms = local_permutation_scheme(z, y, 5, 20, 11);
    // A fallback draw reuses a donor; every other draw takes an unused one.
    Index repeats = 0;
    for (std::size_t m = 0; m < perms.donors.size(); ++m) {
      const auto& d = perms.donors[m];
      for (Index i = 0; i < 80; ++i) {
        const Index j = d[static_cast<std::size_t>(i)];
        Index closer = 0;
        for (Index t = 0; t < 80; ++t) closer += std::abs(z(t, 0) - z(i, 0)) < std::abs(z(j, 0) - z(i, 0));
        CHECK(closer < 5);
        CHECK(perms.permuted_y[m](i) == y(j));
      }
      std::set<Index> distinct(d.begin(), d.end());
      repeats += 80 - static_cast<Index>(distinct.size());
    }
    CHECK(repeats == perms.fallback_count);
  }
}

TEST_CASE("size guard and validation") {
  CmiParams params;
  try {
    validate(params, 5001);
    FAIL("expected RuntimeGuard");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kRuntimeGuard);
  }
  CHECK_NOTHROW(validate(params, 5000));
  params.allow_large_n = true;
  CHECK_NOTHROW(validate(params, 5001));
  CHECK(resolve_k_cmi(CmiParams{}, 500) == 50);
  CmiParams big_k;
  big_k.k_cmi = 49;
  CHECK_THROWS_AS(validate(big_k, 50), Error);
  CmiParams few;
  few.num_permutations = 10;
  CHECK_THROWS_AS(validate(few, 100), Error);
}

TEST_CASE("test behaviour: dependence, null, determinism") {
  const Vector z = testing::normal_vector(300, 1);
  const Vector y = z + testing::normal_vector(300, 2);
  Matrix x(300, 1);
  x.col(0) = y - z + 0.3 * testing::normal_vector(300, 3);
  CmiParams params;
  params.seed = 5;
  const TestOutcome dep = cmiknn_test(FeatureSample(x, y, Matrix(z)), params, 0.05);
  CHECK(dep.p_value == 0.0);
  CHECK(dep.reject);

  const Matrix xi = Matrix(z) + testing::normal_matrix(300, 1, 4);
  const TestOutcome null = cmiknn_test(FeatureSample(xi, y, Matrix(z)), params, 0.05);
  CHECK(null.p_value >= 0.0);
  CHECK(null.p_value <= 1.0);
  const TestOutcome again = cmiknn_test(FeatureSample(xi, y, Matrix(z)), params, 0.05);
  CHECK(again.p_value == null.p_value);
  CHECK(again.statistic == null.statistic);
  CHECK(std::get<std::string>(null.params.at("metric")) == "chebyshev");
}
