#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace logopt {

enum class ErrorCode {
  DimensionMismatch,
  InvalidProbability,
  MissingTransitionRow,
  NotConverged,
  HistoryTooShort,
  NonPositiveInput,
  EmptyDistribution,
  ShapeMismatch,
  PathMismatch,
  NotApplicable,
  InvalidArgument,
  UnknownName,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidProbability: return "InvalidProbability";
    case ErrorCode::MissingTransitionRow: return "MissingTransitionRow";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::HistoryTooShort: return "HistoryTooShort";
    case ErrorCode::NonPositiveInput: return "NonPositiveInput";
    case ErrorCode::EmptyDistribution: return "EmptyDistribution";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::PathMismatch: return "PathMismatch";
    case ErrorCode::NotApplicable: return "NotApplicable";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnknownName: return "UnknownName";
  }
  return "Unknown";
}

// Every failure in the library is reported through this type; `code()` is
// the stable part, the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace logopt
