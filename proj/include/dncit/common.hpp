#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include <Eigen/Dense>

namespace dncit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class ErrorCode {
  kRowMismatch,
  kNonNumeric,
  kEmptyInput,
  kDimMismatch,
  kKTooLarge,
  kDegenerateY,
  kDegenerateDenominator,
  kTooFewRows,
  kRankDeficient,
  kUnsupportedDim,
  kMissingColumn,
  kNonPositive,
  kInvalidArgument,
  kUnmatchedId,
  kIo,
  kSchema,
  kRuntimeGuard,
};

std::string_view to_string(ErrorCode code);

// Errors caused by the caller's data or configuration, as opposed to a
// failure inside a test procedure.
bool is_input_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Resolved hyperparameters recorded alongside test results.
using ParamValue = std::variant<double, std::string>;
using ParamMap = std::map<std::string, ParamValue>;

// SplitMix64 finalizer; used to derive independent seeds from a master seed.
std::uint64_t mix_seed(std::uint64_t x);

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix_seed(master ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index) {
  return derive_seed(derive_seed(master, stream), index);
}

}  // namespace dncit
