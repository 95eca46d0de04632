#include "dncit/cpt_kpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "dncit/kernels.hpp"

namespace dncit {

namespace {
constexpr Index kGramRows = 3000;
}  // namespace

void validate(const KpcParams& p) {
  if (p.k_graph < 1) throw Error(ErrorCode::kInvalidArgument, "k_graph must be >= 1");
  if (p.num_permutations < 19) {
    throw Error(ErrorCode::kInvalidArgument, "CPT needs at least 19 permutations");
  }
  if (p.sweeps < 1) throw Error(ErrorCode::kInvalidArgument, "sweeps must be >= 1");
  if (p.kernel_sigma && !(*p.kernel_sigma > 0.0)) {
    throw Error(ErrorCode::kNonPositive, "kernel_sigma must be positive");
  }
}

std::vector<Permutation> cpt_sample_permutations(const ConditionalModel& model, const Vector& y,
                                                 Index num_permutations, Index sweeps,
                                                 std::uint64_t seed) {
  const Index n = y.size();
  if (model.fitted_means.size() != n) {
    throw Error(ErrorCode::kDimMismatch, "model and y differ in length");
  }
  if (num_permutations < 1) throw Error(ErrorCode::kInvalidArgument, "M must be >= 1");
  const Vector& mu = model.fitted_means;
  const double inv_var = 1.0 / model.sigma2;

  std::vector<Permutation> out;
  out.reserve(static_cast<std::size_t>(num_permutations));
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index m = 0; m < num_permutations; ++m) {
    std::mt19937_64 rng(derive_seed(seed, 11, static_cast<std::uint64_t>(m)));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Permutation perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::iota(order.begin(), order.end(), Index{0});
    for (Index s = 0; s < sweeps; ++s) {
      std::shuffle(order.begin(), order.end(), rng);
      for (Index t = 0; t + 1 < n; t += 2) {
        const auto i = static_cast<std::size_t>(order[static_cast<std::size_t>(t)]);
        const auto j = static_cast<std::size_t>(order[static_cast<std::size_t>(t + 1)]);
        const double ya = y(perm[i]);
        const double yb = y(perm[j]);
        // log of p(yb|z_i) p(ya|z_j) / (p(ya|z_i) p(yb|z_j)) for a Gaussian.
        const double log_q = -(ya - yb) * (mu(static_cast<Index>(i)) - mu(static_cast<Index>(j))) * inv_var;
        // Barker acceptance q / (1 + q), written to avoid overflow.
        const double accept = log_q >= 0.0 ? 1.0 / (1.0 + std::exp(-log_q))
                                           : std::exp(log_q) / (1.0 + std::exp(log_q));
        if (unif(rng) < accept) std::swap(perm[i], perm[j]);
      }
    }
    out.push_back(std::move(perm));
  }
  return out;
}

KpcEvaluator::KpcEvaluator(const Matrix& x, const Matrix& z, const KpcParams& params)
    : k_graph_(params.k_graph) {
  validate(params);
  const Index n = x.rows();
  if (z.cols() > 0 && z.rows() != n) throw Error(ErrorCode::kRowMismatch, "X and Z differ in rows");
  if (n <= params.k_graph + 1) {
    throw Error(ErrorCode::kKTooLarge, "KPC needs n > k_graph + 1");
  }
  xs_ = standardize_columns(x).values;
  sigma_ = params.kernel_sigma ? *params.kernel_sigma : median_heuristic(xs_);
  if (n <= kGramRows) {
    Matrix gram(n, n);
    for (Index j = 0; j < n; ++j) {
      for (Index i = j; i < n; ++i) gram(i, j) = gram(j, i) = kernel(i, j);
    }
    gram_ = std::move(gram);
  }
  if (z.cols() > 0) {
    zs_ = standardize_columns(z).values;
    z_term_ = graph_term(build_knn_graph(zs_, k_graph_, Metric::kEuclidean));
  } else {
    // Unconditional analogue: mean kernel over all ordered pairs i != j.
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) acc += kernel(i, j);
    }
    z_term_ = 2.0 * acc / (static_cast<double>(n) * static_cast<double>(n - 1));
  }
  joint_.resize(n, 1 + zs_.cols());
  if (zs_.cols() > 0) joint_.rightCols(zs_.cols()) = zs_;
  if (std::abs(denominator()) < 1e-12) {
    throw Error(ErrorCode::kDegenerateDenominator,
                "KPC denominator vanishes: X is nearly a function of Z");
  }
}

double KpcEvaluator::kernel(Index i, Index j) const {
  if (gram_.size() > 0) return gram_(j, i);
  return gaussian_kernel_sqdist((xs_.row(i) - xs_.row(j)).squaredNorm(), sigma_);
}

double KpcEvaluator::graph_term(const KnnGraph& graph) const {
  double total = 0.0;
  const Index n = xs_.rows();
  for (Index i = 0; i < n; ++i) {
    const auto& list = graph.neighbor_lists[static_cast<std::size_t>(i)];
    double acc = 0.0;
    for (Index j : list) acc += kernel(i, j);
    total += acc / static_cast<double>(list.size());
  }
  return total / static_cast<double>(n);
}

double KpcEvaluator::statistic(const Vector& y) const {
  if (y.size() != xs_.rows()) throw Error(ErrorCode::kRowMismatch, "y has the wrong length");
  Matrix joint = joint_;
  joint.col(0) = standardize_columns(y).values.col(0);
  const double y_term = graph_term(build_knn_graph(joint, k_graph_, Metric::kEuclidean));
  return (y_term - z_term_) / denominator();
}

double kpc_statistic(const FeatureSample& sample, const KpcParams& params) {
  return KpcEvaluator(sample.x(), sample.z(), params).statistic(sample.y());
}

double permutation_pvalue(double observed, const std::vector<double>& permuted) {
  const auto exceed = std::count_if(permuted.begin(), permuted.end(),
                                    [&](double t) { return t >= observed; });
  return static_cast<double>(1 + exceed) / static_cast<double>(1 + permuted.size());
}

TestOutcome cpt_kpc_test(const FeatureSample& sample, const KpcParams& params, double alpha,
                         const std::optional<ConditionalModel>& model) {
  const auto start = std::chrono::steady_clock::now();
  validate(params);
  const KpcEvaluator evaluator(sample.x(), sample.z(), params);
  const ConditionalModel fitted =
      model ? *model : fit_conditional_model(sample.y(), sample.z(), sample.z_kinds());
  const double observed = evaluator.statistic(sample.y());
  const auto perms = cpt_sample_permutations(fitted, sample.y(), params.num_permutations,
                                             params.sweeps, params.seed);
  std::vector<double> permuted;
  permuted.reserve(perms.size());
  Vector yp(sample.n());
  for (const auto& perm : perms) {
    for (Index i = 0; i < sample.n(); ++i) yp(i) = sample.y()(perm[static_cast<std::size_t>(i)]);
    permuted.push_back(evaluator.statistic(yp));
  }
  const double p = permutation_pvalue(observed, permuted);
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  ParamMap resolved{
      {"k_graph", static_cast<double>(params.k_graph)},
      {"kernel_sigma", evaluator.sigma()},
      {"num_permutations", static_cast<double>(params.num_permutations)},
      {"sweeps", static_cast<double>(params.sweeps)},
      {"conditional_model", std::string(model ? "supplied" : "gam")},
      {"sigma2", fitted.sigma2},
      {"effective_dof", fitted.effective_dof},
  };
  if (!params.kernel_sigma) resolved["bandwidth"] = std::string("median_heuristic");
  return make_outcome(Method::kCptKpc, observed, p, alpha, std::move(resolved), params.seed, ms);
}

}  // namespace dncit
