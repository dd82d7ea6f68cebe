#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fitbd {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kNonFinite,
  kZeroVector,
  kEmptyInput,
  kInfeasible,
  kAlreadyPoisoned,
  kNotAffected,
  kEmptyDataset,
  kRankTooLarge,
  kEmptyBatch,
  kEmptyShard,
  kEmptyGroup,
  kZeroDifference,
  kAllUndefined,
  kEmptySet,
  kNoEligibleExamples,
  kConfig,
  kParse,
  kIo,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this type; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace fitbd
