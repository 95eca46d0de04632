#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dncit/common.hpp"
#include "dncit/data_model.hpp"
#include "dncit/methods.hpp"

namespace dncit {

struct RegressOutResult {
  Matrix residuals;
  std::vector<Index> dropped;  // design columns (excluding the intercept) found collinear
};

// Residuals of x after OLS on [1 | design].
RegressOutResult regress_out(const Matrix& x, const Matrix& design);

// The confounder set: base confounders and, per base name, derived columns.
// Every derived column is either an existing z column or an expression
// "a^k" (integer power) or "a*b" over existing z column names.
struct ConfounderSpec {
  std::vector<std::string> base;
  std::map<std::string, std::vector<std::string>> expansions;
};

ConfounderSpec parse_confounder_spec(const std::string& json_text);

// Named z columns; categorical bases may own several encoded columns via
// `source`.
struct ConfounderTable {
  Matrix values;
  std::vector<std::string> names;
  std::vector<std::string> source;  // base name each column belongs to
  std::vector<ColumnKind> kinds;
};

ConfounderTable to_confounder_table(const LabeledMatrix& z);

// The columns of Z_i (own) and l(Z_i) (derived) for one base name, and the
// conditioning set C minus both.
struct AuditBlocks {
  Matrix own;
  Matrix derived;
  Matrix rest;
  std::vector<ColumnKind> rest_kinds;
};

AuditBlocks audit_blocks(const ConfounderTable& z, const ConfounderSpec& spec,
                         const std::string& name);

enum class AuditRole {
  kResidualAsX,     // residual block tested as X, Z_i as Y (default)
  kConfounderAsX,   // Z_i tested as X, residual block as Y
};

struct AuditOptions {
  Method method = Method::kRcot;
  ParamMap params;
  AuditRole role = AuditRole::kResidualAsX;
  double alpha = 0.05;
  std::uint64_t seed = 0;
};

struct AuditEntry {
  std::string name;
  std::optional<double> p_value;
  std::optional<double> statistic;
  std::vector<std::string> dropped_design_columns;
  std::string error;  // non-empty when the test failed for this confounder
};

std::vector<AuditEntry> confounder_audit(const Matrix& x, const ConfounderTable& z,
                                         const ConfounderSpec& spec, const AuditOptions& options);

}  // namespace dncit
