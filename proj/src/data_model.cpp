#include "dncit/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace dncit {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

FeatureSample::FeatureSample(Matrix x, Vector y, Matrix z, std::vector<ColumnKind> z_kinds,
                             std::vector<std::string> z_names)
    : x_(std::move(x)),
      y_(std::move(y)),
      z_(std::move(z)),
      z_kinds_(std::move(z_kinds)),
      z_names_(std::move(z_names)) {
  const Index n = y_.size();
  if (z_.size() == 0) z_.resize(n, 0);
  if (x_.rows() != n || z_.rows() != n) {
    throw Error(ErrorCode::kRowMismatch, "x, y and z must have the same number of rows");
  }
  if (n < 3) throw Error(ErrorCode::kEmptyInput, "at least 3 rows are required");
  if (x_.cols() < 1) throw Error(ErrorCode::kInvalidArgument, "x needs at least one column");
  if (!all_finite(x_) || !y_.allFinite() || !all_finite(z_)) {
    throw Error(ErrorCode::kNonNumeric, "NaN or infinite entries are not allowed");
  }
  if (z_kinds_.empty()) z_kinds_.assign(static_cast<std::size_t>(z_.cols()), ColumnKind::kContinuous);
  if (static_cast<Index>(z_kinds_.size()) != z_.cols()) {
    throw Error(ErrorCode::kDimMismatch, "z column metadata does not match z");
  }
  if (!z_names_.empty() && static_cast<Index>(z_names_.size()) != z_.cols()) {
    throw Error(ErrorCode::kDimMismatch, "z column names do not match z");
  }
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kRcot: return "rcot";
    case Method::kCptKpc: return "cpt_kpc";
    case Method::kCmiknn: return "cmiknn";
    case Method::kFcit: return "fcit";
    case Method::kWald: return "wald";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
  if (name == "rcot") return Method::kRcot;
  if (name == "cpt_kpc" || name == "cpt-kpc") return Method::kCptKpc;
  if (name == "cmiknn") return Method::kCmiknn;
  if (name == "fcit") return Method::kFcit;
  if (name == "wald") return Method::kWald;
  return std::nullopt;
}

TestOutcome make_outcome(Method method, double statistic, double p_value, double alpha,
                         ParamMap params, std::uint64_t seed, double runtime_ms) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  }
  if (std::isnan(p_value)) throw Error(ErrorCode::kInvalidArgument, "p-value is NaN");
  TestOutcome out;
  out.method = method;
  out.statistic = statistic;
  out.p_value = std::clamp(p_value, 0.0, 1.0);
  out.alpha = alpha;
  out.reject = out.p_value <= alpha;
  out.params = std::move(params);
  out.seed = seed;
  out.runtime_ms = std::max(runtime_ms, 0.0);
  return out;
}

std::string_view to_string(EmbeddingKind kind) {
  switch (kind) {
    case EmbeddingKind::kIdentity: return "identity";
    case EmbeddingKind::kNoisy: return "noisy";
    case EmbeddingKind::kLinearProjection: return "linear_projection";
    case EmbeddingKind::kPcaInSample: return "pca_insample";
    case EmbeddingKind::kPrecomputed: return "precomputed";
  }
  return "unknown";
}

std::optional<EmbeddingKind> parse_embedding_kind(std::string_view name) {
  for (auto kind : {EmbeddingKind::kIdentity, EmbeddingKind::kNoisy,
                    EmbeddingKind::kLinearProjection, EmbeddingKind::kPcaInSample,
                    EmbeddingKind::kPrecomputed}) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

std::string_view to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::kIndependentSample: return "independent_sample";
    case Provenance::kFunctionOfXZ: return "function_of_xz";
    case Provenance::kFunctionOfX: return "function_of_x";
    case Provenance::kExternal: return "external";
  }
  return "unknown";
}

std::optional<Provenance> parse_provenance(std::string_view name) {
  for (auto p : {Provenance::kIndependentSample, Provenance::kFunctionOfXZ,
                 Provenance::kFunctionOfX, Provenance::kExternal}) {
    if (to_string(p) == name) return p;
  }
  return std::nullopt;
}

void validate(const EmbeddingSpec& spec) {
  if (spec.dim_out < 1) throw Error(ErrorCode::kInvalidArgument, "dim_out must be positive");
  if (spec.noise_variance < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "noise_variance must be nonnegative");
  }
  const bool noisy = spec.kind == EmbeddingKind::kNoisy;
  if (noisy != (spec.noise_variance > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "noise_variance must be positive exactly for the noisy embedding");
  }
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  for (auto& s : cells) {
    const auto first = s.find_first_not_of(" \t");
    const auto last = s.find_last_not_of(" \t");
    s = first == std::string::npos ? std::string() : s.substr(first, last - first + 1);
  }
  return cells;
}

std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  CsvTable table;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header) {
      // Strip a UTF-8 byte order mark.
      if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
      table.headers = split_csv_line(line);
      header = false;
      continue;
    }
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != table.headers.size()) {
      throw Error(ErrorCode::kSchema, path.string() + ": row " +
                                          std::to_string(table.rows.size() + 1) + " has " +
                                          std::to_string(cells.size()) + " cells, expected " +
                                          std::to_string(table.headers.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (header) throw Error(ErrorCode::kEmptyInput, path.string() + " has no header row");
  return table;
}

LabeledMatrix to_labeled_matrix(const CsvTable& table, bool allow_categorical) {
  LabeledMatrix out;
  const std::size_t n = table.rows.size();
  std::optional<std::size_t> id_col;
  for (std::size_t j = 0; j < table.headers.size(); ++j) {
    if (table.headers[j] == "id") id_col = j;
  }
  if (id_col) {
    out.ids.reserve(n);
    for (const auto& row : table.rows) out.ids.push_back(row[*id_col]);
  }

  std::vector<std::vector<double>> columns;
  for (std::size_t j = 0; j < table.headers.size(); ++j) {
    if (id_col && j == *id_col) continue;
    const auto& name = table.headers[j];
    std::vector<double> numeric(n);
    bool is_numeric = true;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& cell = table.rows[i][j];
      if (cell.empty()) {
        throw Error(ErrorCode::kNonNumeric,
                    "missing value in column '" + name + "' row " + std::to_string(i + 1));
      }
      auto v = parse_number(cell);
      if (!v) {
        if (!allow_categorical) {
          throw Error(ErrorCode::kNonNumeric, "cell '" + cell + "' in column '" + name +
                                                  "' row " + std::to_string(i + 1) +
                                                  " is not numeric");
        }
        is_numeric = false;
        break;
      }
      numeric[i] = *v;
    }
    if (is_numeric) {
      columns.push_back(std::move(numeric));
      out.names.push_back(name);
      out.kinds.push_back(ColumnKind::kContinuous);
      out.source_column.push_back(name);
      continue;
    }
    std::set<std::string> levels;
    for (const auto& row : table.rows) levels.insert(row[j]);
    // The alphabetically first level is the reference and gets no column.
    for (auto it = std::next(levels.begin()); it != levels.end(); ++it) {
      std::vector<double> indicator(n);
      for (std::size_t i = 0; i < n; ++i) indicator[i] = table.rows[i][j] == *it ? 1.0 : 0.0;
      columns.push_back(std::move(indicator));
      out.names.push_back(name + "=" + *it);
      out.kinds.push_back(ColumnKind::kCategoricalEncoded);
      out.source_column.push_back(name);
    }
  }
  out.values.resize(static_cast<Index>(n), static_cast<Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      out.values(static_cast<Index>(i), static_cast<Index>(j)) = columns[j][i];
    }
  }
  return out;
}

LabeledMatrix load_matrix_csv(const std::filesystem::path& path, bool allow_categorical) {
  return to_labeled_matrix(read_csv(path), allow_categorical);
}

Matrix reorder_rows(const LabeledMatrix& m, const std::vector<std::string>& order,
                    const std::string& label) {
  std::unordered_map<std::string, Index> position;
  for (std::size_t i = 0; i < m.ids.size(); ++i) {
    if (!position.emplace(m.ids[i], static_cast<Index>(i)).second) {
      throw Error(ErrorCode::kUnmatchedId, label + " has duplicate id '" + m.ids[i] + "'");
    }
  }
  if (m.ids.size() != order.size()) {
    throw Error(ErrorCode::kUnmatchedId, label + " ids do not match the x file ids");
  }
  Matrix out(static_cast<Index>(order.size()), m.values.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto it = position.find(order[i]);
    if (it == position.end()) {
      throw Error(ErrorCode::kUnmatchedId, "id '" + order[i] + "' missing from " + label);
    }
    out.row(static_cast<Index>(i)) = m.values.row(it->second);
  }
  return out;
}

FeatureSample load_sample(const std::filesystem::path& x_path,
                          const std::filesystem::path& y_path,
                          const std::optional<std::filesystem::path>& z_path) {
  LabeledMatrix x = load_matrix_csv(x_path, false);
  LabeledMatrix y = load_matrix_csv(y_path, false);
  std::optional<LabeledMatrix> z;
  if (z_path) z = load_matrix_csv(*z_path, true);

  if (y.values.cols() != 1) {
    throw Error(ErrorCode::kSchema, "y file must hold exactly one value column");
  }
  const bool join_on_id =
      !x.ids.empty() && !y.ids.empty() && (!z || !z->ids.empty());
  Matrix y_values = y.values;
  Matrix z_values = z ? z->values : Matrix(x.values.rows(), 0);
  if (join_on_id) {
    {
      std::set<std::string> unique(x.ids.begin(), x.ids.end());
      if (unique.size() != x.ids.size()) {
        throw Error(ErrorCode::kUnmatchedId, "x has duplicate ids");
      }
    }
    y_values = reorder_rows(y, x.ids, "y");
    if (z) z_values = reorder_rows(*z, x.ids, "z");
  } else {
    const Index n = x.values.rows();
    if (y.values.rows() != n || (z && z->values.rows() != n)) {
      throw Error(ErrorCode::kRowMismatch, "input files have differing row counts");
    }
  }
  if (x.values.rows() < 3) throw Error(ErrorCode::kEmptyInput, "at least 3 rows are required");
  if (x.values.cols() < 1) throw Error(ErrorCode::kEmptyInput, "x file has no value columns");
  return FeatureSample(std::move(x.values), y_values.col(0), std::move(z_values),
                       z ? z->kinds : std::vector<ColumnKind>{},
                       z ? z->names : std::vector<std::string>{});
}

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& values,
                      const std::vector<std::string>& headers) {
  if (static_cast<Index>(headers.size()) != values.cols()) {
    throw Error(ErrorCode::kDimMismatch, "header count does not match matrix columns");
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (std::size_t j = 0; j < headers.size(); ++j) out << (j ? "," : "") << headers[j];
  out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      out << (j ? "," : "") << format_double(values(i, j));
    }
    out << '\n';
  }
}

Standardized standardize_columns(const Matrix& m) {
  const Index n = m.rows();
  if (n < 2) throw Error(ErrorCode::kTooFewRows, "standardization needs at least 2 rows");
  Standardized out{Matrix(n, m.cols()), Vector(m.cols()), Vector(m.cols())};
  for (Index j = 0; j < m.cols(); ++j) {
    const double mean = m.col(j).mean();
    const double ss = (m.col(j).array() - mean).square().sum();
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    out.means(j) = mean;
    // Columns whose spread is at rounding level relative to their magnitude
    // are treated as constant.
    const double scale = std::max(1.0, std::abs(mean));
    if (!(sd > 1e-13 * scale)) {
      out.sds(j) = 0.0;
      out.values.col(j).setZero();
    } else {
      out.sds(j) = sd;
      out.values.col(j) = (m.col(j).array() - mean) / sd;
    }
  }
  return out;
}

}  // namespace dncit
