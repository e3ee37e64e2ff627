#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace twnn {

enum class ErrorKind {
  ShapeMismatch,
  InvalidArgument,
  UnregisteredPrimitive,
  NotScalarOutput,
  Diverged,
  MissingGradient,
  DataExhausted,
  BadMagic,
  TruncatedFile,
  CountMismatch,
  BadRecordSize,
  LabelOutOfRange,
  BadCheckpoint,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library. `kind()` lets callers branch on the
/// failure class without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace twnn
