#pragma once

#include <ostream>

namespace mlh {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitChecksum = 3;

// Entry point behind the mlharness executable. Failures print one JSON line
// {"error": ..., "message": ...} to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mlh
