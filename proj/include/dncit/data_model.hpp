#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dncit/common.hpp"

namespace dncit {

enum class ColumnKind { kContinuous, kCategoricalEncoded };

// The triple (X^omega, Y, Z) every conditional independence test consumes.
// Immutable once constructed; the constructor enforces the shape and
// finiteness invariants. p == 0 encodes an unconditional test.
class FeatureSample {
 public:
  FeatureSample(Matrix x, Vector y, Matrix z = Matrix(0, 0),
                std::vector<ColumnKind> z_kinds = {},
                std::vector<std::string> z_names = {});

  const Matrix& x() const { return x_; }
  const Vector& y() const { return y_; }
  const Matrix& z() const { return z_; }
  const std::vector<ColumnKind>& z_kinds() const { return z_kinds_; }
  const std::vector<std::string>& z_names() const { return z_names_; }

  Index n() const { return y_.size(); }
  Index q() const { return x_.cols(); }
  Index p() const { return z_.cols(); }
  bool unconditional() const { return z_.cols() == 0; }

 private:
  Matrix x_;
  Vector y_;
  Matrix z_;
  std::vector<ColumnKind> z_kinds_;
  std::vector<std::string> z_names_;
};

enum class Method { kRcot, kCptKpc, kCmiknn, kFcit, kWald };

std::string_view to_string(Method method);
// Accepts both "cpt_kpc" and "cpt-kpc" spellings.
std::optional<Method> parse_method(std::string_view name);

struct TestOutcome {
  Method method = Method::kRcot;
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject = false;
  double alpha = 0.05;
  ParamMap params;
  std::uint64_t seed = 0;
  double runtime_ms = 0.0;
};

// Clamps p into [0, 1] and derives the decision so reject == (p <= alpha).
TestOutcome make_outcome(Method method, double statistic, double p_value, double alpha,
                         ParamMap params, std::uint64_t seed, double runtime_ms);

enum class EmbeddingKind { kIdentity, kNoisy, kLinearProjection, kPcaInSample, kPrecomputed };
enum class Provenance { kIndependentSample, kFunctionOfXZ, kFunctionOfX, kExternal };

std::string_view to_string(EmbeddingKind kind);
std::optional<EmbeddingKind> parse_embedding_kind(std::string_view name);
std::string_view to_string(Provenance provenance);
std::optional<Provenance> parse_provenance(std::string_view name);

struct EmbeddingSpec {
  EmbeddingKind kind = EmbeddingKind::kIdentity;
  Index dim_out = 1;
  double noise_variance = 0.0;
  Provenance provenance = Provenance::kFunctionOfX;
};

// Throws kInvalidArgument when noise_variance > 0 does not coincide with
// kind == kNoisy, or dim_out is not positive.
void validate(const EmbeddingSpec& spec);

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvTable {
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path);

// A numeric table after categorical encoding. source_column maps each
// encoded column back to the header it came from.
struct LabeledMatrix {
  Matrix values;
  std::vector<std::string> names;
  std::vector<ColumnKind> kinds;
  std::vector<std::string> source_column;
  std::vector<std::string> ids;  // empty unless the file had an `id` column
};

// Non-numeric columns are one-hot encoded with the alphabetically first
// level dropped when allow_categorical is set; otherwise a non-numeric cell
// raises kNonNumeric.
LabeledMatrix to_labeled_matrix(const CsvTable& table, bool allow_categorical);

LabeledMatrix load_matrix_csv(const std::filesystem::path& path, bool allow_categorical);

// Rows of m.values in the order of the given ids; kUnmatchedId when the id
// sets differ or m repeats an id. label names m in messages.
Matrix reorder_rows(const LabeledMatrix& m, const std::vector<std::string>& order,
                    const std::string& label);

// Rows are joined on the `id` column when every file has one, otherwise
// matched by position.
FeatureSample load_sample(const std::filesystem::path& x_path,
                          const std::filesystem::path& y_path,
                          const std::optional<std::filesystem::path>& z_path);

// Writes 17 significant digits so that reloading reproduces every finite
// double exactly.
void write_matrix_csv(const std::filesystem::path& path, const Matrix& values,
                      const std::vector<std::string>& headers);

std::string format_double(double value);

// ---------------------------------------------------------------------------

struct Standardized {
  Matrix values;
  Vector means;
  Vector sds;
};

// Column-wise z-scores with the n-1 denominator. Constant columns become all
// zeros and report sd 0.
Standardized standardize_columns(const Matrix& m);

}  // namespace dncit
