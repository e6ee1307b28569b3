#include "fuess/error.hpp"

namespace fuess {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::MalformedCsv: return "MalformedCsv";
    case Errc::UnknownPrimaryVariable: return "UnknownPrimaryVariable";
    case Errc::MissingLabel: return "MissingLabel";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::RatioOutOfRange: return "RatioOutOfRange";
    case Errc::InvalidChunkParams: return "InvalidChunkParams";
    case Errc::ProviderUnavailable: return "ProviderUnavailable";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::UnknownVariable: return "UnknownVariable";
    case Errc::EmptyStore: return "EmptyStore";
    case Errc::Io: return "Io";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::CorruptStore: return "CorruptStore";
    case Errc::MissingTargetVariable: return "MissingTargetVariable";
    case Errc::EmptyContext: return "EmptyContext";
    case Errc::Transport: return "Transport";
    case Errc::RateLimited: return "RateLimited";
    case Errc::CredentialMissing: return "CredentialMissing";
    case Errc::StubParseFailure: return "StubParseFailure";
    case Errc::NoJsonFound: return "NoJsonFound";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::NonNumericPrediction: return "NonNumericPrediction";
    case Errc::ConfidenceOutOfRange: return "ConfidenceOutOfRange";
    case Errc::AllRunsFailed: return "AllRunsFailed";
    case Errc::TooFewSelections: return "TooFewSelections";
    case Errc::SizeMismatch: return "SizeMismatch";
    case Errc::AllTrialsFailed: return "AllTrialsFailed";
    case Errc::TooFewTrials: return "TooFewTrials";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::DegenerateR2: return "DegenerateR2";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::EmptyGrid: return "EmptyGrid";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace fuess
