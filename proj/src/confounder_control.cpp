#include "dncit/confounder_control.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "dncit/linear_model.hpp"

namespace dncit {

RegressOutResult regress_out(const Matrix& x, const Matrix& design) {
  if (design.rows() != x.rows()) throw Error(ErrorCode::kRowMismatch, "x and design differ in rows");
  if (x.rows() <= design.cols() + 1) {
    throw Error(ErrorCode::kTooFewRows, "regress_out needs n > design columns + 1");
  }
  const LeastSquaresFit fit = least_squares(with_intercept(design), x);
  RegressOutResult out;
  out.residuals = fit.residuals;
  for (Index c : fit.dropped) {
    if (c > 0) out.dropped.push_back(c - 1);
  }
  return out;
}

ConfounderSpec parse_confounder_spec(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("confounder spec is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::kSchema, "confounder spec must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "base" && key != "expansions") {
      throw Error(ErrorCode::kSchema, "unknown key in confounder spec: " + key);
    }
  }
  if (!doc.contains("base") || !doc["base"].is_array()) {
    throw Error(ErrorCode::kSchema, "confounder spec key 'base' must be an array of names");
  }
  ConfounderSpec spec;
  std::set<std::string> seen;
  for (const auto& item : doc["base"]) {
    if (!item.is_string()) throw Error(ErrorCode::kSchema, "'base' entries must be strings");
    const std::string name = item.get<std::string>();
    if (!seen.insert(name).second) throw Error(ErrorCode::kSchema, "duplicate base name: " + name);
    spec.base.push_back(name);
  }
  if (doc.contains("expansions")) {
    if (!doc["expansions"].is_object()) {
      throw Error(ErrorCode::kSchema, "'expansions' must map base names to lists");
    }
    std::set<std::string> terms;
    for (const auto& [key, list] : doc["expansions"].items()) {
      if (!seen.count(key)) {
        throw Error(ErrorCode::kSchema, "expansions references unknown base '" + key + "'");
      }
      if (!list.is_array()) throw Error(ErrorCode::kSchema, "expansions." + key + " must be a list");
      for (const auto& t : list) {
        if (!t.is_string()) throw Error(ErrorCode::kSchema, "expansion terms must be strings");
        const std::string term = t.get<std::string>();
        if (!terms.insert(term).second || seen.count(term)) {
          throw Error(ErrorCode::kSchema, "duplicate confounder column: " + term);
        }
        spec.expansions[key].push_back(term);
      }
    }
  }
  return spec;
}

ConfounderTable to_confounder_table(const LabeledMatrix& z) {
  ConfounderTable t;
  t.values = z.values;
  t.names = z.names;
  t.source = z.source_column;
  t.kinds = z.kinds;
  if (t.source.empty()) t.source = t.names;
  if (t.kinds.empty()) t.kinds.assign(t.names.size(), ColumnKind::kContinuous);
  return t;
}

namespace {

std::vector<Index> columns_of(const ConfounderTable& z, const std::string& name) {
  std::vector<Index> cols;
  for (std::size_t c = 0; c < z.names.size(); ++c) {
    if (z.names[c] == name || z.source[c] == name) cols.push_back(static_cast<Index>(c));
  }
  return cols;
}

Vector single_column(const ConfounderTable& z, const std::string& name) {
  const auto cols = columns_of(z, name);
  if (cols.empty()) throw Error(ErrorCode::kMissingColumn, "no confounder column named '" + name + "'");
  if (cols.size() > 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "'" + name + "' spans several encoded columns; name one of them explicitly");
  }
  return z.values.col(cols.front());
}

Vector evaluate_term(const ConfounderTable& z, const std::string& term) {
  if (const auto cols = columns_of(z, term); cols.size() == 1) return z.values.col(cols.front());
  if (const auto star = term.find('*'); star != std::string::npos) {
    return single_column(z, term.substr(0, star)).cwiseProduct(single_column(z, term.substr(star + 1)));
  }
  if (const auto caret = term.find('^'); caret != std::string::npos) {
    const std::string exponent = term.substr(caret + 1);
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(exponent, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != exponent.size() || exponent.empty() || k < 1) {
      throw Error(ErrorCode::kSchema, "bad exponent in expansion term '" + term + "'");
    }
    return single_column(z, term.substr(0, caret)).array().pow(static_cast<double>(k));
  }
  throw Error(ErrorCode::kMissingColumn, "cannot resolve expansion term '" + term + "'");
}

Matrix stack(const std::vector<Vector>& cols, Index n) {
  Matrix out(n, static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(c)) = cols[c];
  return out;
}

}  // namespace

AuditBlocks audit_blocks(const ConfounderTable& z, const ConfounderSpec& spec,
                         const std::string& name) {
  const Index n = z.values.rows();
  std::vector<Vector> own, derived, rest;
  AuditBlocks blocks;
  for (const auto& base : spec.base) {
    const auto cols = columns_of(z, base);
    if (cols.empty()) throw Error(ErrorCode::kMissingColumn, "no confounder column named '" + base + "'");
    std::vector<Vector> extra;
    if (auto it = spec.expansions.find(base); it != spec.expansions.end()) {
      for (const auto& term : it->second) extra.push_back(evaluate_term(z, term));
    }
    if (base == name) {
      for (Index c : cols) own.push_back(z.values.col(c));
      derived = std::move(extra);
    } else {
      for (Index c : cols) {
        rest.push_back(z.values.col(c));
        blocks.rest_kinds.push_back(z.kinds[static_cast<std::size_t>(c)]);
      }
      for (auto& e : extra) {
        rest.push_back(std::move(e));
        blocks.rest_kinds.push_back(ColumnKind::kContinuous);
      }
    }
  }
  if (own.empty()) throw Error(ErrorCode::kMissingColumn, "'" + name + "' is not a base confounder");
  blocks.own = stack(own, n);
  blocks.derived = stack(derived, n);
  blocks.rest = stack(rest, n);
  return blocks;
}

std::vector<AuditEntry> confounder_audit(const Matrix& x, const ConfounderTable& z,
                                         const ConfounderSpec& spec, const AuditOptions& options) {
  if (x.rows() != z.values.rows()) throw Error(ErrorCode::kRowMismatch, "x and z differ in rows");
  std::vector<AuditEntry> entries;
  for (std::size_t i = 0; i < spec.base.size(); ++i) {
    AuditEntry entry;
    entry.name = spec.base[i];
    const std::uint64_t seed = derive_seed(options.seed, 41, i);
    try {
      const AuditBlocks blocks = audit_blocks(z, spec, entry.name);
      Matrix design(x.rows(), blocks.own.cols() + blocks.derived.cols());
      design << blocks.own, blocks.derived;
      const RegressOutResult reg = regress_out(x, design);
      for (Index c : reg.dropped) entry.dropped_design_columns.push_back("column " + std::to_string(c));
      const bool residual_x = options.role == AuditRole::kResidualAsX;
      const Matrix& tx = residual_x ? reg.residuals : blocks.own;
      const Matrix& ty = residual_x ? blocks.own : reg.residuals;
      TestOutcome out;
      if (ty.cols() == 1) {
        const FeatureSample sample(tx, ty.col(0), blocks.rest, blocks.rest_kinds);
        out = run_method(options.method, sample, options.params, seed, options.alpha);
      } else if (options.method == Method::kRcot) {
        out = run_rcot_blocks(tx, ty, blocks.rest, options.params, seed, options.alpha);
      } else {
        throw Error(ErrorCode::kInvalidArgument,
                    "a multi-column Y block needs method rcot (" + std::to_string(ty.cols()) +
                        " columns)");
      }
      entry.p_value = out.p_value;
      entry.statistic = out.statistic;
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

}  // namespace dncit
