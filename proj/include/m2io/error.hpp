#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace m2io {

enum class ErrorCode {
  InvalidArgument,
  DuplicateTarget,
  DuplicateImage,
  OutOfRange,
  DimensionMismatch,
  ZeroNorm,
  EmptyCorpus,
  ProviderError,
  MissingSlot,
  EmptyCompletion,
  UnknownImage,
  EmptyGroundTruth,
  LengthMismatch,
  JudgeParseError,
  MissingComponent,
  UnknownSample,
  InsufficientCorpus,
  UnknownSource,
  MissingSamples,
  ParseError,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code so
/// callers (CLI exit codes, the reward service, tests) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace m2io
