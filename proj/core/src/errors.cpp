#include "trajctl/errors.hpp"

namespace trajctl {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonDivisible: return "NonDivisible";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::MalformedDocument: return "MalformedDocument";
    case ErrorCode::FrameCountMismatch: return "FrameCountMismatch";
    case ErrorCode::EmptyBox: return "EmptyBox";
    case ErrorCode::OddGroup: return "OddGroup";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::BoxSizeMismatch: return "BoxSizeMismatch";
    case ErrorCode::SpanOverlap: return "SpanOverlap";
    case ErrorCode::SetsOverlap: return "SetsOverlap";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::AllBlockedRow: return "AllBlockedRow";
    case ErrorCode::WidthMismatch: return "WidthMismatch";
    case ErrorCode::EmptyPrompt: return "EmptyPrompt";
    case ErrorCode::ClientUnavailable: return "ClientUnavailable";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

}  // namespace trajctl
