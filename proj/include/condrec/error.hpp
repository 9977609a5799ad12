#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace condrec {

enum class Errc {
  EmptyAxis,
  UnknownCandidate,
  OutOfRange,
  SchemaError,
  EmptyInput,
  GatewayUnavailable,
  TranscriptMiss,
  InvalidLimit,
  TooManySlices,
  InvalidArgument,
  ZeroVector,
  DimMismatch,
  TemplateError,
  IncompleteCondition,
  UnknownModel,
  EmptyTrainingSet,
  InsufficientCandidates,
  MissingObservation,
  InvalidTemplate,
  UnmatchedLabel,
  PlanRejected,
  ClickOutsideWidget,
  IncompleteSelection,
  DivisionByZero,
  IoError,
  ConfigError,
};

constexpr std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::EmptyAxis: return "EmptyAxis";
    case Errc::UnknownCandidate: return "UnknownCandidate";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::SchemaError: return "SchemaError";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::GatewayUnavailable: return "GatewayUnavailable";
    case Errc::TranscriptMiss: return "TranscriptMiss";
    case Errc::InvalidLimit: return "InvalidLimit";
    case Errc::TooManySlices: return "TooManySlices";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::TemplateError: return "TemplateError";
    case Errc::IncompleteCondition: return "IncompleteCondition";
    case Errc::UnknownModel: return "UnknownModel";
    case Errc::EmptyTrainingSet: return "EmptyTrainingSet";
    case Errc::InsufficientCandidates: return "InsufficientCandidates";
    case Errc::MissingObservation: return "MissingObservation";
    case Errc::InvalidTemplate: return "InvalidTemplate";
    case Errc::UnmatchedLabel: return "UnmatchedLabel";
    case Errc::PlanRejected: return "PlanRejected";
    case Errc::ClickOutsideWidget: return "ClickOutsideWidget";
    case Errc::IncompleteSelection: return "IncompleteSelection";
    case Errc::DivisionByZero: return "DivisionByZero";
    case Errc::IoError: return "IoError";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& detail) { throw Error(code, detail); }

}  // namespace condrec
