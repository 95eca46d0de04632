#pragma once

#include <optional>

#include "dncit/common.hpp"
#include "dncit/data_model.hpp"

namespace dncit {

// Flattened raw objects, one row per object (a desk-scale stand-in for images).
class RawObjectSet {
 public:
  explicit RawObjectSet(Matrix data);
  const Matrix& data() const { return data_; }
  Index n() const { return data_.rows(); }
  Index d() const { return data_.cols(); }

 private:
  Matrix data_;
};

// An embedding map with its estimated parameters. projection is present
// exactly for linear_projection and pca_insample.
struct FittedEmbedding {
  EmbeddingSpec spec;
  Index dim_in = 0;
  std::optional<Matrix> projection;    // dim_in x dim_out
  std::optional<Vector> center;        // fitted column means (PCA only)
  std::optional<std::uint64_t> noise_seed;
  bool rank_deficient = false;         // PCA returned fewer than the requested columns
};

FittedEmbedding make_identity_embedding(Index dim_in);
FittedEmbedding make_noisy_embedding(Index dim_in, double noise_variance, std::uint64_t seed);
// Gaussian projection matrix with N(0, 1/dim_in) entries.
FittedEmbedding make_random_projection(Index dim_in, Index dim_out, std::uint64_t seed);
FittedEmbedding make_linear_projection(Matrix projection);

// Top-q principal directions of the column-centred data. Each component's
// sign is fixed so its largest-magnitude loading is positive. If fewer than
// q singular values are nonzero the result has fewer columns and
// rank_deficient is set.
FittedEmbedding fit_pca_embedding(const RawObjectSet& raw, Index q);

Matrix apply_embedding(const FittedEmbedding& fit, const RawObjectSet& raw);

}  // namespace dncit
