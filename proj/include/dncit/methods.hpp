#pragma once

#include <optional>
#include <string>

#include "dncit/common.hpp"
#include "dncit/conditional_model.hpp"
#include "dncit/data_model.hpp"

namespace dncit {

// Parses "k=v": numbers become doubles, anything else a string.
std::pair<std::string, ParamValue> parse_param(const std::string& assignment);

double param_number(const ParamValue& value, const std::string& key);
std::string param_string(const ParamValue& value, const std::string& key);

struct RunExtras {
  // CPT only: use this conditional law of Y | Z instead of fitting one.
  std::optional<ConditionalModel> conditional_model;
};

// Runs one test with user-level hyperparameters. Unknown keys raise
// kInvalidArgument. Recognised keys:
//   rcot:    a, b, c, lambda, null (moment_match|permutation), num_permutations, bandwidth_rows
//   cpt_kpc: k_graph, kernel_sigma, num_permutations, sweeps
//   cmiknn:  k_cmi, k_perm, num_permutations, noise_scale, allow_large_n
//   fcit:    train_fraction, tree_count, max_depth, min_leaf, max_bins, num_splits,
//            paired_test (t|sign)
//   wald:    expansion (none|squares|squares_interactions)
TestOutcome run_method(Method method, const FeatureSample& sample, const ParamMap& params,
                       std::uint64_t seed, double alpha, const RunExtras& extras = {});

// Same as run_method for RCoT but with a multi-column Y block.
TestOutcome run_rcot_blocks(const Matrix& x, const Matrix& y, const Matrix& z,
                            const ParamMap& params, std::uint64_t seed, double alpha);

}  // namespace dncit
