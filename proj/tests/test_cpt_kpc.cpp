#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "dncit/conditional_model.hpp"
#include "dncit/cpt_kpc.hpp"
#include "support.hpp"

using namespace dncit;

namespace {

// Cox-de Boor recursion with 0/0 = 0; the right end of the domain belongs to
// the last interval.
double cox_de_boor(const std::vector<double>& t, std::size_t i, int degree, double x) {
  if (degree == 0) {
    const double hi = t.back();
    if (x == hi) return (t[i] < x && t[i + 1] == x) ? 1.0 : 0.0;
    return (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
  }
  double left = 0.0, right = 0.0;
  const double dl = t[i + static_cast<std::size_t>(degree)] - t[i];
  const double dr = t[i + static_cast<std::size_t>(degree) + 1] - t[i + 1];
  if (dl > 0.0) left = (x - t[i]) / dl * cox_de_boor(t, i, degree - 1, x);
  if (dr > 0.0) right = (t[i + static_cast<std::size_t>(degree) + 1] - x) / dr * cox_de_boor(t, i + 1, degree - 1, x);
  return left + right;
}

double rmse(const Vector& a, const Vector& b) { return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size())); }

// Unnormalised log law of a permutation under a Gaussian model.
double log_weight(const std::vector<Index>& perm, const Vector& y, const Vector& mu, double s2) {
  double acc = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const double r = y(perm[i]) - mu(static_cast<Index>(i));
    acc -= r * r / (2.0 * s2);
  }
  return acc;
}

}  // namespace

TEST_CASE("cubic B-spline basis matches the Cox-de Boor recursion") {
  const std::vector<double> knots{0, 0, 0, 0, 0.5, 1.1, 2.0, 2.2, 3, 3, 3, 3};
  for (double x : {0.0, 0.01, 0.5, 0.73, 1.1, 1.9, 2.2, 2.9, 3.0}) {
    const Vector b = bspline_basis(x, knots);
    REQUIRE(b.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(b(static_cast<Index>(i)) == doctest::Approx(cox_de_boor(knots, i, 3, x)).epsilon(1e-12));
    }
    CHECK(b.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("conditional model recovers a linear mean") {
  const Vector z = testing::normal_vector(2000, 1);
  const Vector y = 2.0 * z + 0.1 * testing::normal_vector(2000, 2);
  const ConditionalModel m = fit_conditional_model(y, Matrix(z), {ColumnKind::kContinuous});
  CHECK(rmse(m.fitted_means, 2.0 * z) < 0.05);
  CHECK(m.sigma2 == doctest::Approx(0.01).epsilon(0.15));
}

TEST_CASE("conditional model recovers sin(3z)") {
  const Vector z = testing::normal_vector(2000, 3);
  const Vector truth = (3.0 * z.array()).sin().matrix();
  const Vector y = truth + 0.3 * testing::normal_vector(2000, 4);
  const ConditionalModel m = fit_conditional_model(y, Matrix(z), {ColumnKind::kContinuous});
  CHECK(rmse(m.fitted_means, truth) < 0.1);
  CHECK(m.effective_dof > 3.0);
}

TEST_CASE("intercept-only model without Z") {
  const Vector y = testing::normal_vector(40, 5) * 3.0;
  const ConditionalModel m = fit_conditional_model(y, Matrix(40, 0), {});
  CHECK((m.fitted_means.array() - y.mean()).abs().maxCoeff() < 1e-12);
  const double var = (y.array() - y.mean()).square().sum() / 39.0;
  CHECK(m.sigma2 == doctest::Approx(var).epsilon(1e-10));
}

TEST_CASE("categorical confounder gives group means") {
  Matrix z(9, 1);
  z << 0, 0, 0, 1, 1, 1, 2, 2, 2;
  Vector y(9);
  y << 1, 2, 3, 10, 11, 12, -4, -5, -6;
  const ConditionalModel m = fit_conditional_model(y, z, {ColumnKind::kCategoricalEncoded});
  Vector expected(9);
  expected << 2, 2, 2, 11, 11, 11, -5, -5, -5;
  CHECK((m.fitted_means - expected).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("collinear confounders are dropped with a SingularBasis warning") {
  const Vector a = testing::normal_vector(300, 6);
  Matrix z(300, 2);
  z.col(0) = a;
  z.col(1) = a;
  const Vector y = a + 0.2 * testing::normal_vector(300, 7);
  const ConditionalModel m = fit_conditional_model(y, z, {ColumnKind::kContinuous, ColumnKind::kContinuous});
  const bool warned = std::any_of(m.warnings.begin(), m.warnings.end(),
                                  [](const std::string& w) { return w.find("SingularBasis") != std::string::npos; });
  CHECK(warned);
  CHECK(m.fitted_means.allFinite());
  CHECK(rmse(m.fitted_means, a) < 0.1);
}

TEST_CASE("sampler: uninformative model gives uniform permutations at n = 4") {
  const ConditionalModel model = ConditionalModel::from_truth(Vector::Zero(4), 1.0);
  Vector y(4);
  y << 0.3, -1.0, 2.0, 0.5;
  const auto perms = cpt_sample_permutations(model, y, 10000, 50, 99);
  std::map<std::vector<Index>, int> counts;
  for (const auto& p : perms) ++counts[p];
  CHECK(counts.size() == 24);
  double chi2 = 0.0;
  const double expected = 10000.0 / 24.0;
  for (const auto& [perm, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 41.638);  // chi^2_23 upper 1% point
}

TEST_CASE("sampler: a hopeless swap is never accepted") {
  Vector mu(2);
  mu << 0.0, 10.0;
  Vector y(2);
  y << 0.0, 10.0;
  const auto perms = cpt_sample_permutations(ConditionalModel::from_truth(mu, 1.0), y, 200, 50, 3);
  for (const auto& p : perms) CHECK(p == std::vector<Index>{0, 1});
}

TEST_CASE("sampler: n = 3 frequencies match the enumerated law") {
  Vector mu(3);
  mu << 0.0, 0.6, 1.5;
  Vector y(3);
  y << 0.2, 1.4, 0.7;
  const double s2 = 0.8;
  std::vector<Index> perm{0, 1, 2};
  std::map<std::vector<Index>, double> law;
  double total = 0.0;
  do {
    const double w = std::exp(log_weight(perm, y, mu, s2));
    law[perm] = w;
    total += w;
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (auto& [p, w] : law) w /= total;

  const Index draws = 100000;
  const auto perms = cpt_sample_permutations(ConditionalModel::from_truth(mu, s2), y, draws, 50, 12345);
  std::map<std::vector<Index>, double> freq;
  for (const auto& p : perms) freq[p] += 1.0 / static_cast<double>(draws);
  for (const auto& [p, w] : law) CHECK(std::abs(freq[p] - w) < 0.01);
}

TEST_CASE("sampler is deterministic given the seed") {
  const Vector mu = testing::normal_vector(30, 1);
  const Vector y = testing::normal_vector(30, 2);
  const auto model = ConditionalModel::from_truth(mu, 1.0);
  CHECK(cpt_sample_permutations(model, y, 5, 10, 8) == cpt_sample_permutations(model, y, 5, 10, 8));
  CHECK(cpt_sample_permutations(model, y, 5, 10, 8) != cpt_sample_permutations(model, y, 5, 10, 9));
}

TEST_CASE("KPC limits") {
  const Vector y = testing::normal_vector(500, 11);
  KpcParams params;
  CHECK(kpc_statistic(FeatureSample(Matrix(y), y), params) >= 0.9);

  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const FeatureSample s(testing::normal_matrix(500, 2, 100 + seed), testing::normal_vector(500, 200 + seed),
                          testing::normal_matrix(500, 1, 300 + seed));
    mean += kpc_statistic(s, params) / 50.0;
  }
  CHECK(std::abs(mean) <= 0.05);
}

TEST_CASE("KPC on a 6-row hand dataset with k = 1") {
  Matrix x(6, 1);
  x << 0.1, 1.3, -0.7, 2.2, 0.4, -1.5;
  Vector y(6);
  y << 1.0, 2.0, 0.5, 3.5, 1.2, -0.3;
  Matrix z(6, 1);
  z << 0.0, 1.0, 0.3, 2.5, 1.6, -1.0;

  auto standardise = [](Vector v) {
    const double m = v.mean();
    const double sd = std::sqrt((v.array() - m).square().sum() / (static_cast<double>(v.size()) - 1.0));
    return Vector((v.array() - m) / sd);
  };
  const Vector xs = standardise(x.col(0));
  const Vector ys = standardise(y);
  const Vector zs = standardise(z.col(0));
  std::vector<double> d;
  for (int i = 0; i < 6; ++i) {
    for (int j = i + 1; j < 6; ++j) d.push_back(std::abs(xs(i) - xs(j)));
  }
  std::sort(d.begin(), d.end());
  const double sigma = d[7];  // median of 15 distances
  auto k = [&](int i, int j) { return std::exp(-(xs(i) - xs(j)) * (xs(i) - xs(j)) / (2.0 * sigma * sigma)); };
  auto nearest = [&](int i, bool joint) {
    int best = -1;
    double best_d = 1e300;
    for (int j = 0; j < 6; ++j) {
      if (j == i) continue;
      double dd = (zs(i) - zs(j)) * (zs(i) - zs(j));
      if (joint) dd += (ys(i) - ys(j)) * (ys(i) - ys(j));
      if (dd < best_d) {
        best_d = dd;
        best = j;
      }
    }
    return best;
  };
  double term_z = 0.0, term_yz = 0.0;
  for (int i = 0; i < 6; ++i) {
    term_z += k(i, nearest(i, false)) / 6.0;
    term_yz += k(i, nearest(i, true)) / 6.0;
  }
  const double expected = (term_yz - term_z) / (1.0 - term_z);

  KpcParams params;
  params.k_graph = 1;
  CHECK(kpc_statistic(FeatureSample(x, y, z), params) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("KPC flags X that is constant within Z neighbourhoods") {
  Matrix z(100, 1), x(100, 1);
  for (Index i = 0; i < 100; ++i) {
    z(i, 0) = static_cast<double>(i / 20);
    x(i, 0) = static_cast<double>((i / 20) * (i / 20));
  }
  const Vector y = testing::normal_vector(100, 1);
  try {
    kpc_statistic(FeatureSample(x, y, z), KpcParams{});
    FAIL("expected DegenerateDenominator");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateDenominator);
  }
}

TEST_CASE("permutation p-value boundaries") {
  CHECK(permutation_pvalue(5.0, std::vector<double>(199, 1.0)) == doctest::Approx(1.0 / 200.0));
  CHECK(permutation_pvalue(-5.0, std::vector<double>(199, 1.0)) == 1.0);
  CHECK(permutation_pvalue(1.0, {1.0, 0.0, 2.0}) == doctest::Approx(3.0 / 4.0));
}

TEST_CASE("p-value lies in [1/(M+1), 1] for a strong signal") {
  const Vector z = testing::normal_vector(150, 1);
  const Vector y = z + 0.3 * testing::normal_vector(150, 2);
  Matrix x(150, 1);
  x.col(0) = y - z + 0.05 * testing::normal_vector(150, 3);
  KpcParams params;
  params.num_permutations = 39;
  params.seed = 4;
  const TestOutcome o = cpt_kpc_test(FeatureSample(x, y, Matrix(z)), params, 0.05);
  CHECK(o.p_value >= 1.0 / 40.0);
  CHECK(o.p_value == doctest::Approx(1.0 / 40.0));
  CHECK(o.reject);
}

TEST_CASE("without Z, all-permutation p-values are uniform on the grid") {
  // Every relabelling of y is equally likely under exchangeability, so the
  // rank p-value over the full permutation group is (super-)uniform.
  const Matrix x = testing::normal_matrix(6, 2, 21);
  Vector y(6);
  y << 0.4, -1.1, 2.3, 0.9, -0.2, 1.6;
  KpcParams params;
  params.k_graph = 2;
  const KpcEvaluator eval(x, Matrix(6, 0), params);
  std::vector<Index> perm(6);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::vector<double> stats;
  do {
    Vector yp(6);
    for (Index i = 0; i < 6; ++i) yp(i) = y(perm[static_cast<std::size_t>(i)]);
    stats.push_back(eval.statistic(yp));
  } while (std::next_permutation(perm.begin(), perm.end()));
  REQUIRE(stats.size() == 720);
  std::vector<double> p;
  for (double t : stats) {
    p.push_back(static_cast<double>(std::count_if(stats.begin(), stats.end(), [&](double s) { return s >= t; })) / 720.0);
  }
  for (int k = 1; k <= 720; ++k) {
    const double level = k / 720.0;
    const auto hits = std::count_if(p.begin(), p.end(), [&](double v) { return v <= level + 1e-15; });
    CHECK(static_cast<double>(hits) <= static_cast<double>(k) + 1e-9);
  }
}

TEST_CASE("decision is unchanged when X columns are rescaled") {
  int same = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix z = testing::normal_matrix(80, 1, 500 + seed);
    Matrix x = testing::normal_matrix(80, 2, 600 + seed);
    const Vector y = z.col(0) + (seed % 2 == 0 ? 0.8 : 0.0) * x.col(0) + 0.5 * testing::normal_vector(80, 700 + seed);
    KpcParams params;
    params.num_permutations = 39;
    params.seed = seed;
    const bool a = cpt_kpc_test(FeatureSample(x, y, z), params, 0.05).reject;
    const bool b = cpt_kpc_test(FeatureSample(x * 10.0, y, z), params, 0.05).reject;
    same += a == b ? 1 : 0;
  }
  CHECK(same == 20);
}

TEST_CASE("statistic is invariant to simultaneous row reordering") {
  const Matrix z = testing::normal_matrix(60, 2, 1);
  const Matrix x = testing::normal_matrix(60, 3, 2);
  const Vector y = z.col(0) + x.col(1) + testing::normal_vector(60, 3);
  const double base = kpc_statistic(FeatureSample(x, y, z), KpcParams{});
  std::vector<Index> perm(60);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::reverse(perm.begin(), perm.end());
  Matrix xp(60, 3), zp(60, 2);
  Vector yp(60);
  for (Index i = 0; i < 60; ++i) {
    xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    zp.row(i) = z.row(perm[static_cast<std::size_t>(i)]);
    yp(i) = y(perm[static_cast<std::size_t>(i)]);
  }
  CHECK(kpc_statistic(FeatureSample(xp, yp, zp), KpcParams{}) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("parameter validation") {
  KpcParams p;
  p.num_permutations = 10;
  CHECK_THROWS_AS(validate(p), Error);
  p = KpcParams{};
  p.k_graph = 0;
  CHECK_THROWS_AS(validate(p), Error);
  const FeatureSample tiny(testing::normal_matrix(8, 1, 1), testing::normal_vector(8, 2));
  try {
    kpc_statistic(tiny, KpcParams{});
    FAIL("expected KTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kKTooLarge);
  }
}
