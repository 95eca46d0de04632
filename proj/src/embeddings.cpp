#include "dncit/embeddings.hpp"

#include <random>

namespace dncit {

RawObjectSet::RawObjectSet(Matrix data) : data_(std::move(data)) {
  if (data_.cols() < 1) throw Error(ErrorCode::kInvalidArgument, "raw objects need d >= 1");
  if (!data_.allFinite()) throw Error(ErrorCode::kNonNumeric, "raw objects must be finite");
}

FittedEmbedding make_identity_embedding(Index dim_in) {
  FittedEmbedding fit;
  fit.spec = {EmbeddingKind::kIdentity, dim_in, 0.0, Provenance::kFunctionOfX};
  fit.dim_in = dim_in;
  return fit;
}

FittedEmbedding make_noisy_embedding(Index dim_in, double noise_variance, std::uint64_t seed) {
  FittedEmbedding fit;
  fit.spec = {EmbeddingKind::kNoisy, dim_in, noise_variance, Provenance::kIndependentSample};
  validate(fit.spec);
  fit.dim_in = dim_in;
  fit.noise_seed = seed;
  return fit;
}

FittedEmbedding make_linear_projection(Matrix projection) {
  FittedEmbedding fit;
  fit.spec = {EmbeddingKind::kLinearProjection, projection.cols(), 0.0, Provenance::kExternal};
  validate(fit.spec);
  fit.dim_in = projection.rows();
  fit.projection = std::move(projection);
  return fit;
}

FittedEmbedding make_random_projection(Index dim_in, Index dim_out, std::uint64_t seed) {
  if (dim_in < 1 || dim_out < 1) {
    throw Error(ErrorCode::kInvalidArgument, "projection dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim_in)));
  Matrix p(dim_in, dim_out);
  for (Index j = 0; j < dim_out; ++j) {
    for (Index i = 0; i < dim_in; ++i) p(i, j) = normal(rng);
  }
  return make_linear_projection(std::move(p));
}

FittedEmbedding fit_pca_embedding(const RawObjectSet& raw, Index q) {
  const Index n = raw.n();
  const Index d = raw.d();
  if (n < 2) throw Error(ErrorCode::kTooFewRows, "PCA needs at least 2 rows");
  if (q < 1 || q > std::min(n, d)) {
    throw Error(ErrorCode::kInvalidArgument, "PCA dimension must lie in [1, min(n, d)]");
  }
  const Vector mean = raw.data().colwise().mean();
  const Matrix centered = raw.data().rowwise() - mean.transpose();
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double tol = sv.size() > 0 ? sv(0) * 1e-10 * static_cast<double>(std::max(n, d)) : 0.0;
  Index rank = 0;
  while (rank < sv.size() && sv(rank) > tol) ++rank;
  const Index kept = std::min(q, rank);

  Matrix projection = svd.matrixV().leftCols(kept);
  for (Index j = 0; j < kept; ++j) {
    Index arg = 0;
    projection.col(j).cwiseAbs().maxCoeff(&arg);
    if (projection(arg, j) < 0.0) projection.col(j) *= -1.0;
  }

  FittedEmbedding fit;
  fit.spec = {EmbeddingKind::kPcaInSample, std::max<Index>(kept, 1), 0.0,
              Provenance::kFunctionOfX};
  fit.dim_in = d;
  fit.projection = std::move(projection);
  fit.center = mean;
  fit.rank_deficient = kept < q;
  return fit;
}

Matrix apply_embedding(const FittedEmbedding& fit, const RawObjectSet& raw) {
  if (raw.d() != fit.dim_in) {
    throw Error(ErrorCode::kDimMismatch, "raw dimension " + std::to_string(raw.d()) +
                                             " does not match embedding input " +
                                             std::to_string(fit.dim_in));
  }
  switch (fit.spec.kind) {
    case EmbeddingKind::kIdentity:
    case EmbeddingKind::kPrecomputed:
      return raw.data();
    case EmbeddingKind::kNoisy: {
      std::mt19937_64 rng(fit.noise_seed.value_or(0));
      std::normal_distribution<double> normal(0.0, std::sqrt(fit.spec.noise_variance));
      Matrix out = raw.data();
      for (Index j = 0; j < out.cols(); ++j) {
        for (Index i = 0; i < out.rows(); ++i) out(i, j) += normal(rng);
      }
      return out;
    }
    case EmbeddingKind::kLinearProjection:
    case EmbeddingKind::kPcaInSample: {
      if (!fit.projection) throw Error(ErrorCode::kInvalidArgument, "missing projection");
      const Vector center =
          fit.center ? *fit.center : Vector(raw.data().colwise().mean().transpose());
      return (raw.data().rowwise() - center.transpose()) * *fit.projection;
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown embedding kind");
}

}  // namespace dncit
