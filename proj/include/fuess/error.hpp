#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fuess {

enum class Errc {
  // domain
  FileNotFound,
  MalformedCsv,
  UnknownPrimaryVariable,
  MissingLabel,
  InsufficientSamples,
  RatioOutOfRange,
  // vector store
  InvalidChunkParams,
  ProviderUnavailable,
  DimensionMismatch,
  UnknownVariable,
  EmptyStore,
  Io,
  UnsupportedVersion,
  CorruptStore,
  // prompts
  MissingTargetVariable,
  EmptyContext,
  // llm gateway
  Transport,
  RateLimited,
  CredentialMissing,
  StubParseFailure,
  NoJsonFound,
  SchemaViolation,
  NonNumericPrediction,
  ConfidenceOutOfRange,
  // stages
  AllRunsFailed,
  TooFewSelections,
  SizeMismatch,
  AllTrialsFailed,
  TooFewTrials,
  // evaluation
  LengthMismatch,
  EmptyInput,
  DegenerateR2,
  TooFewSamples,
  EmptyGrid,
  InvalidSpec,
  InvalidArgument,
};

std::string_view to_string(Errc code) noexcept;

/// Typed failure raised by every module. `detail()` carries the offending
/// field / reason and `position()` the row, byte offset or HTTP status when
/// the error kind has one (-1 otherwise).
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::string detail = {},
        std::int64_t position = -1)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(std::move(detail)),
        position_(position) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  std::int64_t position() const noexcept { return position_; }

 private:
  Errc code_;
  std::string detail_;
  std::int64_t position_;
};

}  // namespace fuess
