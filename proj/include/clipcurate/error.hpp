#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace clipcurate {

enum class ErrorCode {
  UnreadableSource,
  UndecodableStream,
  InvalidArgument,
  InvalidConfig,
  DimensionMismatch,
  TooFewFrames,
  InsufficientPoints,
  EmptyClip,
  NoFrames,
  NonPositiveInput,
  InsufficientFrames,
  ServiceUnavailable,
  MalformedResponse,
  EmptyCaption,
  ValidationError,
  MalformedLine,
  SinkFull,
  IOFailure,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnreadableSource: return "UnreadableSource";
    case ErrorCode::UndecodableStream: return "UndecodableStream";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::EmptyClip: return "EmptyClip";
    case ErrorCode::NoFrames: return "NoFrames";
    case ErrorCode::NonPositiveInput: return "NonPositiveInput";
    case ErrorCode::InsufficientFrames: return "InsufficientFrames";
    case ErrorCode::ServiceUnavailable: return "ServiceUnavailable";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::EmptyCaption: return "EmptyCaption";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::SinkFull: return "SinkFull";
    case ErrorCode::IOFailure: return "IOFailure";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Record-level validation failure; `field()` is a dotted path such as "scores.aesthetic".
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& message)
      : Error(ErrorCode::ValidationError, field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class MalformedLine : public Error {
 public:
  MalformedLine(std::size_t line_no, const std::string& message)
      : Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": " + message),
        line_no_(line_no) {}

  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

}  // namespace clipcurate
