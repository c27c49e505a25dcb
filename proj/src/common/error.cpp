#include "dvelab/common/error.hpp"

namespace dvelab {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::GenerationFailed: return "GENERATION_FAILED";
    case ErrorCode::StepAfterDone: return "STEP_AFTER_DONE";
    case ErrorCode::DimMismatch: return "DIM_MISMATCH";
    case ErrorCode::NonFiniteInput: return "NON_FINITE_INPUT";
    case ErrorCode::TapeReused: return "TAPE_REUSED";
    case ErrorCode::NonFiniteGrad: return "NON_FINITE_GRAD";
    case ErrorCode::NotSimplex: return "NOT_SIMPLEX";
    case ErrorCode::EmptyTrace: return "EMPTY_TRACE";
    case ErrorCode::EmptyBatch: return "EMPTY_BATCH";
    case ErrorCode::LengthMismatch: return "LENGTH_MISMATCH";
    case ErrorCode::NonFiniteLoss: return "NON_FINITE_LOSS";
    case ErrorCode::InsufficientHistory: return "INSUFFICIENT_HISTORY";
    case ErrorCode::NoConvergence: return "NO_CONVERGENCE";
    case ErrorCode::TooFewSamples: return "TOO_FEW_SAMPLES";
    case ErrorCode::EnumerationBudgetExceeded: return "ENUMERATION_BUDGET_EXCEEDED";
    case ErrorCode::MissingOracle: return "MISSING_ORACLE";
    case ErrorCode::ZeroLength: return "ZERO_LENGTH";
    case ErrorCode::ConfigError: return "CONFIG_ERROR";
    case ErrorCode::IoError: return "IO_ERROR";
    case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
  }
  return "UNKNOWN";
}

}  // namespace dvelab
