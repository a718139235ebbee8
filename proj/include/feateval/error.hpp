#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace feateval {

enum class ErrorCode {
  kCorpusEmpty,
  kInsufficientCorpus,
  kFeatureNotFound,
  kProviderUnavailable,
  kSteeringUnsupported,
  kCapabilityMissing,
  kRecordMissing,
  kProtocolError,
  kJudgeFailure,
  kEmptySampleSet,
  kConfigError,
  kClarityUndefined,
  kConceptStarved,
  kDescribeFailure,
  kEmptyRun,
  kCorrelationUndefined,
  kIoError,
};

std::string_view error_code_name(ErrorCode code);

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

  /// Transport-level failures that a caller may retry.
  bool retryable() const noexcept { return code_ == ErrorCode::kProviderUnavailable; }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// Config validation failure naming the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(ErrorCode::kConfigError, field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace feateval
