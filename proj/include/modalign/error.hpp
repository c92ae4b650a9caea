#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace modalign {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  ZeroVector,
  NonFinite,
  EmptyKeys,
  CountMismatch,
  DuplicateId,
  MalformedRecord,
  UnknownSample,
  MissingCategory,
  NonPositiveTemperature,
  DegenerateBatch,
  UnknownLabel,
  MissingRelevance,
  EmptyCenterSet,
  InsufficientSamples,
  Io,
  Format,
  Numerical,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// Every failure raised by the library carries a machine-readable code so the
/// C API and CLI can translate it without parsing messages.
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

}  // namespace modalign
