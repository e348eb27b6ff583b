#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace headrest {

enum class ErrorCode {
  InvalidArgument,
  NonPositiveDepth,
  DegenerateEyePair,
  NonFiniteKeypoint,
  OutOfFrustum,
  MalformedFrame,
  StreamStalled,
  NoSubject,
  CoincidentPoints,
  SampleRateMismatch,
  BandOutOfRange,
  ZeroPower,
  SignalTooShort,
  Diverged,
  IllConditioned,
  EmptyBank,
  NodeOutsideGrid,
  BadMagic,
  BadCrc,
  BadVersion,
  BadLength,
  TruncatedFrame,
  Disconnected,
  ConfigError,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace headrest
