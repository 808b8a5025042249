#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace unialign {

enum class ErrorCode {
  ZeroVector,
  DimensionMismatch,
  DegenerateCentroid,
  BatchTooSmall,
  InvalidWeights,
  InvalidArgument,
  UndefinedCosine,
  DomainError,
  CalibrationFailure,
  NumericalUnderflow,
  GridTooCoarse,
  StepBlowup,
  ParseError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateCentroid: return "DegenerateCentroid";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::InvalidWeights: return "InvalidWeights";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UndefinedCosine: return "UndefinedCosine";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::CalibrationFailure: return "CalibrationFailure";
    case ErrorCode::NumericalUnderflow: return "NumericalUnderflow";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
    case ErrorCode::StepBlowup: return "StepBlowup";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to a stable exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace unialign
