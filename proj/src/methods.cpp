#include "dncit/methods.hpp"

#include <cmath>
#include <set>

#include "dncit/cmiknn.hpp"
#include "dncit/cpt_kpc.hpp"
#include "dncit/fcit.hpp"
#include "dncit/rcot.hpp"
#include "dncit/wald.hpp"

namespace dncit {

std::pair<std::string, ParamValue> parse_param(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::kInvalidArgument, "parameter must look like key=value: " + assignment);
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return {key, v};
  } catch (const std::exception&) {
  }
  return {key, text};
}

double param_number(const ParamValue& value, const std::string& key) {
  if (const double* d = std::get_if<double>(&value)) return *d;
  throw Error(ErrorCode::kInvalidArgument, "parameter " + key + " must be numeric");
}

std::string param_string(const ParamValue& value, const std::string& key) {
  if (const std::string* s = std::get_if<std::string>(&value)) return *s;
  throw Error(ErrorCode::kInvalidArgument, "parameter " + key + " must be a string");
}

namespace {

Index param_index(const ParamValue& value, const std::string& key) {
  const double d = param_number(value, key);
  if (d != std::floor(d)) throw Error(ErrorCode::kInvalidArgument, "parameter " + key + " must be an integer");
  return static_cast<Index>(d);
}

void reject_unknown(const ParamMap& params, const std::set<std::string>& known, Method method) {
  for (const auto& [key, value] : params) {
    if (!known.count(key)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "unknown parameter '" + key + "' for method " + std::string(to_string(method)));
    }
  }
}

RcotParams rcot_params(const ParamMap& params, std::uint64_t seed) {
  reject_unknown(params, {"a", "b", "c", "lambda", "null", "num_permutations", "bandwidth_rows"},
                 Method::kRcot);
  RcotParams p;
  p.seed = seed;
  for (const auto& [key, value] : params) {
    if (key == "a") p.num_f_x = param_index(value, key);
    if (key == "b") p.num_f_y = param_index(value, key);
    if (key == "c") p.num_f_z = param_index(value, key);
    if (key == "lambda") p.ridge_lambda = param_number(value, key);
    if (key == "num_permutations") p.num_permutations = param_index(value, key);
    if (key == "bandwidth_rows") p.bandwidth_rows = param_index(value, key);
    if (key == "null") {
      const std::string s = param_string(value, key);
      if (s == "moment_match") {
        p.null_method = RcotNull::kMomentMatch;
      } else if (s == "permutation") {
        p.null_method = RcotNull::kPermutation;
      } else {
        throw Error(ErrorCode::kInvalidArgument, "null must be moment_match or permutation");
      }
    }
  }
  return p;
}

}  // namespace

TestOutcome run_rcot_blocks(const Matrix& x, const Matrix& y, const Matrix& z,
                            const ParamMap& params, std::uint64_t seed, double alpha) {
  return rcot_test_blocks(x, y, z, rcot_params(params, seed), alpha);
}

TestOutcome run_method(Method method, const FeatureSample& sample, const ParamMap& params,
                       std::uint64_t seed, double alpha, const RunExtras& extras) {
  switch (method) {
    case Method::kRcot:
      return rcot_test(sample, rcot_params(params, seed), alpha);
    case Method::kCptKpc: {
      reject_unknown(params, {"k_graph", "kernel_sigma", "num_permutations", "sweeps"}, method);
      KpcParams p;
      p.seed = seed;
      for (const auto& [key, value] : params) {
        if (key == "k_graph") p.k_graph = param_index(value, key);
        if (key == "num_permutations") p.num_permutations = param_index(value, key);
        if (key == "sweeps") p.sweeps = param_index(value, key);
        if (key == "kernel_sigma") {
          if (const std::string* s = std::get_if<std::string>(&value); s && *s == "auto") continue;
          p.kernel_sigma = param_number(value, key);
        }
      }
      return cpt_kpc_test(sample, p, alpha, extras.conditional_model);
    }
    case Method::kCmiknn: {
      reject_unknown(params, {"k_cmi", "k_perm", "num_permutations", "noise_scale", "allow_large_n"},
                     method);
      CmiParams p;
      p.seed = seed;
      for (const auto& [key, value] : params) {
        if (key == "k_cmi") p.k_cmi = param_index(value, key);
        if (key == "k_perm") p.k_perm = param_index(value, key);
        if (key == "num_permutations") p.num_permutations = param_index(value, key);
        if (key == "noise_scale") p.noise_scale = param_number(value, key);
        if (key == "allow_large_n") p.allow_large_n = param_number(value, key) != 0.0;
      }
      return cmiknn_test(sample, p, alpha);
    }
    case Method::kFcit: {
      reject_unknown(params,
                     {"train_fraction", "tree_count", "max_depth", "min_leaf", "max_bins",
                      "num_splits", "paired_test"},
                     method);
      FcitParams p;
      p.seed = seed;
      for (const auto& [key, value] : params) {
        if (key == "train_fraction") p.train_fraction = param_number(value, key);
        if (key == "tree_count") p.trees.tree_count = param_index(value, key);
        if (key == "max_depth") p.trees.max_depth = param_index(value, key);
        if (key == "min_leaf") p.trees.min_leaf = param_index(value, key);
        if (key == "max_bins") p.trees.max_bins = param_index(value, key);
        if (key == "num_splits") p.num_splits = param_index(value, key);
        if (key == "paired_test") {
          const std::string s = param_string(value, key);
          if (s == "t") {
            p.paired_test = PairedTest::kT;
          } else if (s == "sign") {
            p.paired_test = PairedTest::kSign;
          } else {
            throw Error(ErrorCode::kInvalidArgument, "paired_test must be t or sign");
          }
        }
      }
      return fcit_test(sample, p, alpha);
    }
    case Method::kWald: {
      reject_unknown(params, {"expansion"}, method);
      WaldParams p;
      if (auto it = params.find("expansion"); it != params.end()) {
        const std::string s = param_string(it->second, "expansion");
        if (s == "none") {
          p.expansion = ZExpansion::kNone;
        } else if (s == "squares") {
          p.expansion = ZExpansion::kSquares;
        } else if (s == "squares_interactions") {
          p.expansion = ZExpansion::kSquaresAndInteractions;
        } else {
          throw Error(ErrorCode::kInvalidArgument,
                      "expansion must be none, squares or squares_interactions");
        }
      }
      TestOutcome out = wald_test(sample, p, alpha);
      out.seed = seed;
      return out;
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown method");
}

}  // namespace dncit
