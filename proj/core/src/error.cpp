#include "fitbd/error.hpp"

namespace fitbd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kAlreadyPoisoned: return "AlreadyPoisoned";
    case ErrorCode::kNotAffected: return "NotAffected";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kRankTooLarge: return "RankTooLarge";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kEmptyShard: return "EmptyShard";
    case ErrorCode::kEmptyGroup: return "EmptyGroup";
    case ErrorCode::kZeroDifference: return "ZeroDifference";
    case ErrorCode::kAllUndefined: return "AllUndefined";
    case ErrorCode::kEmptySet: return "EmptySet";
    case ErrorCode::kNoEligibleExamples: return "NoEligibleExamples";
    case ErrorCode::kConfig: return "Config";
    case ErrorCode::kParse: return "Parse";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace fitbd
