#pragma once

#include <optional>
#include <vector>

#include "dncit/common.hpp"
#include "dncit/conditional_model.hpp"
#include "dncit/data_model.hpp"
#include "dncit/knn.hpp"

namespace dncit {

struct KpcParams {
  Index k_graph = 10;
  std::optional<double> kernel_sigma;  // unset = median heuristic on standardised X
  Index num_permutations = 199;
  Index sweeps = 50;
  std::uint64_t seed = 0;
};

void validate(const KpcParams& params);

// perm[i] is the row whose y value is placed at position i.
using Permutation = std::vector<Index>;

// M independent chains, each started at the identity and run for `sweeps`
// rounds. A round shuffles the positions, pairs them off, and proposes to
// swap the donors of each pair; the swap is accepted with the Barker
// probability q / (1 + q), q being the density ratio under the Gaussian
// model. Stationary law: P(perm) proportional to prod_i p(y[perm[i]] | z_i).
std::vector<Permutation> cpt_sample_permutations(const ConditionalModel& model, const Vector& y,
                                                 Index num_permutations, Index sweeps,
                                                 std::uint64_t seed);

// Evaluates graph KPC for many y vectors against fixed X and Z. The Z graph
// term and the denominator depend only on (X, Z) and are computed once.
class KpcEvaluator {
 public:
  KpcEvaluator(const Matrix& x, const Matrix& z, const KpcParams& params);

  double statistic(const Vector& y) const;

  double sigma() const { return sigma_; }
  double z_term() const { return z_term_; }
  double denominator() const { return 1.0 - z_term_; }

 private:
  double kernel(Index i, Index j) const;
  double graph_term(const KnnGraph& graph) const;

  Matrix xs_;        // standardised X
  Matrix gram_;      // cached kernel matrix for moderate n
  Matrix zs_;        // standardised Z
  Matrix joint_;     // standardised (y, z), first column refreshed per call
  Index k_graph_;
  double sigma_ = 1.0;
  double z_term_ = 0.0;
};

double kpc_statistic(const FeatureSample& sample, const KpcParams& params);

// Permutation p-value (1 + #{T_m >= T}) / (1 + M). Without a model, the
// conditional model is fitted to (y, z) by fit_conditional_model.
TestOutcome cpt_kpc_test(const FeatureSample& sample, const KpcParams& params, double alpha,
                         const std::optional<ConditionalModel>& model = std::nullopt);

// (1 + #{permuted >= observed}) / (1 + M).
double permutation_pvalue(double observed, const std::vector<double>& permuted);

}  // namespace dncit
