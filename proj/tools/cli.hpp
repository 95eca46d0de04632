#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dncit/confounder_control.hpp"
#include "dncit/data_model.hpp"

namespace dncit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitMethod = 3;

// args excludes the program name: {"test", "--x", "x.csv", ...}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

nlohmann::json outcome_json(const TestOutcome& outcome, const FeatureSample& sample);

nlohmann::json audit_json(const std::vector<AuditEntry>& entries, const AuditOptions& options,
                          Index n, Index dim_x);

// "bonferroni:K" -> K. Throws kInvalidArgument on anything else.
Index parse_adjust(const std::string& spec);

}  // namespace dncit::cli
