#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sepdiff {

enum class ErrorCode {
  InvalidArgument,
  NumericFailure,
  UnsupportedFormat,
  CorruptFile,
  IoError,
  EmptyDataset,
  ContractViolation,
  UndefinedReference,
  VersionMismatch,
};

std::string_view to_string(ErrorCode code);

/// Base error for the whole library. The code classifies the failure so the
/// CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::InvalidArgument, message);
}

}  // namespace sepdiff
