#pragma once

#include <stdexcept>
#include <string>

namespace trajctl {

enum class ErrorCode {
  NonDivisible,
  OutOfBounds,
  MalformedDocument,
  FrameCountMismatch,
  EmptyBox,
  OddGroup,
  DimMismatch,
  BoxSizeMismatch,
  SpanOverlap,
  SetsOverlap,
  ShapeMismatch,
  AllBlockedRow,
  WidthMismatch,
  EmptyPrompt,
  ClientUnavailable,
  MalformedResponse,
  ConfigError,
  IoError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace trajctl
