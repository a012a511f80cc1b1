#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chatsos {

/// Every failure the library reports is one of these kinds. The HTTP layer
/// and the CLI map kinds to status and exit codes with total functions below.
enum class ErrorKind {
  kParse,               // malformed input syntax (JSON line, config)
  kSchema,              // well-formed input missing required fields
  kValidation,          // argument outside its documented domain
  kUniqueness,          // duplicate doc_id / chunk_id
  kNotFound,            // unknown chunk id, template, file
  kConfiguration,       // mismatched dims, unusable settings
  kBudget,              // prompt budget smaller than its fixed parts
  kPrecondition,        // e.g. projection with fewer than 4 points
  kUnseenContext,       // MLE conditional on an unobserved context
  kTransport,           // network / timeout after retries (embedder)
  kBackendUnavailable,  // network / timeout after retries (LLM)
  kService,             // upstream responded non-2xx
  kProtocol,            // upstream responded with an unusable body
  kEmptyAnswer,         // upstream completion was empty
  kFormat,              // snapshot magic mismatch
  kVersion,             // snapshot version unsupported
  kCorruption,          // snapshot truncated or checksum mismatch
  kNumericFailure,      // non-finite values during optimization
  kIo,                  // filesystem errors
  kInternal,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kUniqueness: return "uniqueness";
    case ErrorKind::kNotFound: return "not_found";
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kBudget: return "budget";
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kUnseenContext: return "unseen_context";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kBackendUnavailable: return "backend_unavailable";
    case ErrorKind::kService: return "service";
    case ErrorKind::kProtocol: return "protocol";
    case ErrorKind::kEmptyAnswer: return "empty_answer";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kVersion: return "version";
    case ErrorKind::kCorruption: return "corruption";
    case ErrorKind::kNumericFailure: return "numeric_failure";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kInternal: return "internal";
  }
  return "internal";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// HTTP status for an error kind: validation 400, not-found 404,
/// conflict 409, upstream 502, everything internal 500.
constexpr int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse:
    case ErrorKind::kSchema:
    case ErrorKind::kValidation:
    case ErrorKind::kBudget:
    case ErrorKind::kPrecondition:
    case ErrorKind::kUnseenContext:
      return 400;
    case ErrorKind::kNotFound:
      return 404;
    case ErrorKind::kUniqueness:
      return 409;
    case ErrorKind::kTransport:
    case ErrorKind::kBackendUnavailable:
    case ErrorKind::kService:
    case ErrorKind::kProtocol:
    case ErrorKind::kEmptyAnswer:
      return 502;
    case ErrorKind::kConfiguration:
    case ErrorKind::kFormat:
    case ErrorKind::kVersion:
    case ErrorKind::kCorruption:
    case ErrorKind::kNumericFailure:
    case ErrorKind::kIo:
    case ErrorKind::kInternal:
      return 500;
  }
  return 500;
}

/// CLI exit code: 1 validation, 2 I/O, 3 upstream.
constexpr int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo:
    case ErrorKind::kFormat:
    case ErrorKind::kVersion:
    case ErrorKind::kCorruption:
      return 2;
    case ErrorKind::kTransport:
    case ErrorKind::kBackendUnavailable:
    case ErrorKind::kService:
    case ErrorKind::kProtocol:
    case ErrorKind::kEmptyAnswer:
      return 3;
    default:
      return 1;
  }
}

}  // namespace chatsos
