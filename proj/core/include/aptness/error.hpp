#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aptness {

enum class ErrorKind {
  kConfig,
  kPrecondition,
  kTransport,
  kRequest,
  kReplay,
  kProviderContract,
  kParse,
  kData,
  kRange,
  kBuild,
  kCheckpoint,
  kManifest,
  kLoad,
  kQuery,
  kPrediction,
  kExport,
  kPipeline,
  kJudge,
  kAggregation,
  kStatistics,
  kExtraction,
  kNotFound,
  kConflict,
  kBusy,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind; callers branch on it
// (the CLI maps kinds to exit codes, the HTTP service to status codes).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Parse failures keep the offending provider text for diagnosis.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::string raw)
      : Error(ErrorKind::kParse, message), raw_(std::move(raw)) {}

  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

// 0 success, 2 config, 3 transport, 4 data/validation.
int exit_code_for(ErrorKind kind);

}  // namespace aptness
