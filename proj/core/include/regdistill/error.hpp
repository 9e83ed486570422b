#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace regdistill {

enum class ErrorCode {
  // corpus
  EmptyDocument,
  InvalidEncoding,
  NoContent,
  EmptyQuery,
  // dataset
  MalformedLine,
  InvalidRecord,
  TooFew,
  // teacher
  MissingBinding,
  UnknownBinding,
  AuthError,
  RateLimited,
  TransportError,
  EmptyCompletion,
  UnknownTemplateMarker,
  // generate / audit
  TeacherUnavailable,
  MissingEvidence,
  ReportMismatch,
  // eval
  SchemaError,
  MissingTranscript,
  // resources
  TooFewPoints,
  // shared
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// True for failures that originate at the teacher/model transport boundary.
bool is_transport_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by parse_jsonl in strict mode; carries the failing 1-based line.
class MalformedLineError : public Error {
 public:
  MalformedLineError(std::size_t line_no, std::string reason);

  std::size_t line_no() const noexcept { return line_no_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_no_;
  std::string reason_;
};

}  // namespace regdistill
