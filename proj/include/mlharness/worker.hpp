#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlharness/frame.hpp"

namespace mlh {

struct WorkerOptions {
  std::chrono::milliseconds io_timeout{30'000};
};

// Splits a launch command into argv. Whitespace separates words; single and
// double quotes group, backslash escapes the next character.
std::vector<std::string> split_command(std::string_view command);

// A persistent child process speaking the frame protocol over its standard
// input and output. The harness side never receives SIGPIPE.
class WorkerProcess {
 public:
  WorkerProcess(std::string_view command, WorkerOptions options = {});
  ~WorkerProcess();

  WorkerProcess(const WorkerProcess&) = delete;
  WorkerProcess& operator=(const WorkerProcess&) = delete;

  // Sends one request frame and waits for exactly one response frame.
  // WorkerCrashed on EOF, exit, or I/O timeout; ProtocolError on a malformed
  // response, a response whose hook does not echo the request, or an
  // in-band error frame (ctx key "error").
  Frame exchange(std::span<const std::uint8_t> request, HookId hook);

  // Closes the worker's input and reaps it, killing it after the I/O timeout.
  // Returns the exit status as reported by waitpid, or -1 if already reaped.
  int close();

  pid_t pid() const noexcept { return pid_; }
  bool alive() const noexcept { return pid_ > 0; }

 private:
  void write_all(std::span<const std::uint8_t> bytes,
                 std::chrono::steady_clock::time_point deadline);
  void read_exact(std::uint8_t* dst, std::size_t n,
                  std::chrono::steady_clock::time_point deadline);
  [[noreturn]] void crashed(const std::string& why);

  WorkerOptions options_;
  std::string command_;
  pid_t pid_ = -1;
  int fd_ = -1;
};

}  // namespace mlh
