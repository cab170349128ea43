#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mlh {

// Every failure the harness reports carries one of these codes. The CLI maps
// them onto exit codes and prints the name in its machine-readable error line.
enum class Errc {
  // manifest
  SyntaxError,
  ValidationError,
  ParseError,
  FormatError,
  FetchError,
  ChecksumMismatch,
  // tensor / frame
  RankError,
  TruncatedFrame,
  UnknownDtypeCode,
  UnknownHookId,
  LengthMismatch,
  // processor
  WorkerLaunchError,
  ProtocolError,
  WorkerCrashed,
  HookContractError,
  LifecycleError,
  SizeMismatch,
  RangeError,
  DegenerateCrop,
  ShapeMismatch,
  ZeroRescale,
  // sut
  IndexOutOfRange,
  NotLoaded,
  // loadgen / metrics
  ConfigError,
  EmptyInput,
  EmptyRun,
  // trace
  LevelDisabled,
  WorkloadMismatch,
  // io
  IoError,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace mlh
