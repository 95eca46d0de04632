#include "dncit/common.hpp"

namespace dncit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kRowMismatch: return "RowMismatch";
    case ErrorCode::kNonNumeric: return "NonNumeric";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kDegenerateY: return "DegenerateY";
    case ErrorCode::kDegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::kTooFewRows: return "TooFewRows";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kUnsupportedDim: return "UnsupportedDim";
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kNonPositive: return "NonPositive";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kUnmatchedId: return "UnmatchedId";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kSchema: return "Schema";
    case ErrorCode::kRuntimeGuard: return "RuntimeGuard";
  }
  return "Unknown";
}

bool is_input_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::kRowMismatch:
    case ErrorCode::kNonNumeric:
    case ErrorCode::kEmptyInput:
    case ErrorCode::kUnmatchedId:
    case ErrorCode::kIo:
    case ErrorCode::kSchema:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kUnsupportedDim:
    case ErrorCode::kMissingColumn:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace dncit
