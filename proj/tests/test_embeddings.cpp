#include <doctest.h>

#include <cmath>

#include "dncit/embeddings.hpp"
#include "support.hpp"

using namespace dncit;

namespace {

// Sign convention from the embedding module, applied to oracle vectors.
Vector fix_sign(Vector v) {
  Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  return v(arg) < 0 ? Vector(-v) : v;
}

}  // namespace

TEST_CASE("PCA on points along y = x recovers the diagonal") {
  Matrix raw(5, 2);
  raw << -2, -2, -1, -1, 0, 0, 1, 1, 2, 2;
  const FittedEmbedding fit = fit_pca_embedding(RawObjectSet(raw), 1);
  REQUIRE(fit.projection);
  CHECK(std::abs((*fit.projection)(0, 0)) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK((*fit.projection)(0, 0) == doctest::Approx((*fit.projection)(1, 0)));
}

TEST_CASE("PCA on an isotropic cloud returns a unit vector") {
  const Matrix raw = testing::normal_matrix(400, 3, 5);
  const FittedEmbedding fit = fit_pca_embedding(RawObjectSet(raw), 1);
  CHECK(fit.projection->col(0).norm() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("PCA loadings match a Jacobi eigen-decomposition of the scatter matrix") {
  Matrix raw(4, 3);
  raw << 2, 0, 1,
         1, 3, -1,
         0, 1, 4,
         5, 2, 2;
  const FittedEmbedding fit = fit_pca_embedding(RawObjectSet(raw), 2);
  REQUIRE(fit.projection);
  REQUIRE(fit.projection->cols() == 2);
  const Matrix centered = raw.rowwise() - raw.colwise().mean();
  Vector values;
  Matrix vectors;
  testing::jacobi_eigen(centered.transpose() * centered, values, vectors);
  for (Index k = 0; k < 2; ++k) {
    const Vector expected = fix_sign(vectors.col(k));
    CHECK((fit.projection->col(k) - expected).cwiseAbs().maxCoeff() < 1e-10);
  }
  // Orthonormal columns.
  const Matrix gram = fit.projection->transpose() * *fit.projection;
  CHECK((gram - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("PCA flags rank deficiency and returns fewer columns") {
  Matrix raw(6, 3);
  for (Index i = 0; i < 6; ++i) raw.row(i) << static_cast<double>(i), 2.0 * static_cast<double>(i), 1.0;
  const FittedEmbedding fit = fit_pca_embedding(RawObjectSet(raw), 2);
  CHECK(fit.rank_deficient);
  CHECK(fit.projection->cols() == 1);
}

TEST_CASE("PCA is bitwise reproducible") {
  const Matrix raw = testing::normal_matrix(60, 8, 2);
  const FittedEmbedding a = fit_pca_embedding(RawObjectSet(raw), 3);
  const FittedEmbedding b = fit_pca_embedding(RawObjectSet(raw), 3);
  CHECK((a.projection->array() == b.projection->array()).all());
}

TEST_CASE("identity embedding returns the input unchanged") {
  const Matrix raw = testing::normal_matrix(10, 4, 1);
  CHECK((apply_embedding(make_identity_embedding(4), RawObjectSet(raw)).array() == raw.array()).all());
}

TEST_CASE("noisy embedding adds noise of the declared variance") {
  const Matrix raw = testing::normal_matrix(20000, 5, 9);
  const Matrix out = apply_embedding(make_noisy_embedding(5, 3.0, 77), RawObjectSet(raw));
  const Matrix diff = out - raw;
  const double mean = diff.mean();
  const double var = (diff.array() - mean).square().sum() / static_cast<double>(diff.size() - 1);
  CHECK(var == doctest::Approx(3.0).epsilon(0.05));
  // Same seed, same noise.
  CHECK((apply_embedding(make_noisy_embedding(5, 3.0, 77), RawObjectSet(raw)).array() == out.array()).all());
}

TEST_CASE("coordinate projection returns the centred first column") {
  Matrix raw(4, 3);
  raw << 1, 9, 9, 2, 8, 7, 3, 1, 1, 6, 0, 0;
  Matrix e1 = Matrix::Zero(3, 1);
  e1(0, 0) = 1.0;
  const Matrix out = apply_embedding(make_linear_projection(e1), RawObjectSet(raw));
  Vector expected(4);
  expected << -2, -1, 0, 3;
  CHECK((out.col(0) - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("apply_embedding checks the input dimension") {
  const Matrix raw = testing::normal_matrix(5, 3, 1);
  try {
    apply_embedding(make_random_projection(4, 2, 1), RawObjectSet(raw));
    FAIL("expected DimMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDimMismatch);
  }
}

TEST_CASE("random projection entries have variance 1/dim_in") {
  const FittedEmbedding fit = make_random_projection(400, 50, 3);
  const Matrix& p = *fit.projection;
  const double var = p.array().square().mean();
  CHECK(var == doctest::Approx(1.0 / 400.0).epsilon(0.05));
}
