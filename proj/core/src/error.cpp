#include "regdistill/error.hpp"

#include <string>

namespace regdistill {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::InvalidEncoding: return "InvalidEncoding";
    case ErrorCode::NoContent: return "NoContent";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::TooFew: return "TooFew";
    case ErrorCode::MissingBinding: return "MissingBinding";
    case ErrorCode::UnknownBinding: return "UnknownBinding";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::EmptyCompletion: return "EmptyCompletion";
    case ErrorCode::UnknownTemplateMarker: return "UnknownTemplateMarker";
    case ErrorCode::TeacherUnavailable: return "TeacherUnavailable";
    case ErrorCode::MissingEvidence: return "MissingEvidence";
    case ErrorCode::ReportMismatch: return "ReportMismatch";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::MissingTranscript: return "MissingTranscript";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

bool is_transport_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::AuthError:
    case ErrorCode::RateLimited:
    case ErrorCode::TransportError:
    case ErrorCode::EmptyCompletion:
    case ErrorCode::TeacherUnavailable:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

MalformedLineError::MalformedLineError(std::size_t line_no, std::string reason)
    : Error(ErrorCode::MalformedLine,
            "line " + std::to_string(line_no) + ": " + reason),
      line_no_(line_no),
      reason_(std::move(reason)) {}

}  // namespace regdistill
