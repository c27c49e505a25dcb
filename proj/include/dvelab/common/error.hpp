#pragma once

#include <stdexcept>
#include <string>

namespace dvelab {

enum class ErrorCode {
  GenerationFailed,
  StepAfterDone,
  DimMismatch,
  NonFiniteInput,
  TapeReused,
  NonFiniteGrad,
  NotSimplex,
  EmptyTrace,
  EmptyBatch,
  LengthMismatch,
  NonFiniteLoss,
  InsufficientHistory,
  NoConvergence,
  TooFewSamples,
  EnumerationBudgetExceeded,
  MissingOracle,
  ZeroLength,
  ConfigError,
  IoError,
  InvalidArgument,
};

const char* to_string(ErrorCode code) noexcept;

/// Every recoverable failure in the library is reported through this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dvelab
