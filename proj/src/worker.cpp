#include "mlharness/worker.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

namespace mlh {

namespace {

using SteadyTime = std::chrono::steady_clock::time_point;

int remaining_ms(SteadyTime deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
      deadline - std::chrono::steady_clock::now());
  return left.count() <= 0 ? 0 : static_cast<int>(std::min<long long>(left.count(), 1 << 30));
}

}  // namespace

std::vector<std::string> split_command(std::string_view command) {
  std::vector<std::string> words;
  std::string current;
  bool in_word = false;
  char quote = 0;
  for (std::size_t i = 0; i < command.size(); ++i) {
    const char c = command[i];
    if (quote) {
      if (c == quote) {
        quote = 0;
      } else if (c == '\\' && quote == '"' && i + 1 < command.size()) {
        current.push_back(command[++i]);
      } else {
        current.push_back(c);
      }
    } else if (c == '\'' || c == '"') {
      quote = c;
      in_word = true;
    } else if (c == '\\' && i + 1 < command.size()) {
      current.push_back(command[++i]);
      in_word = true;
    } else if (c == ' ' || c == '\t' || c == '\n') {
      if (in_word) words.push_back(std::move(current));
      current.clear();
      in_word = false;
    } else {
      current.push_back(c);
      in_word = true;
    }
  }
  if (quote) fail(Errc::WorkerLaunchError, "unterminated quote in worker command");
  if (in_word) words.push_back(std::move(current));
  return words;
}

WorkerProcess::WorkerProcess(std::string_view command, WorkerOptions options)
    : options_(options), command_(command) {
  const auto argv_words = split_command(command);
  if (argv_words.empty()) fail(Errc::WorkerLaunchError, "empty worker command");
  std::vector<char*> argv;
  for (const auto& w : argv_words) argv.push_back(const_cast<char*>(w.c_str()));
  argv.push_back(nullptr);

  int sock[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sock) != 0) {
    fail(Errc::WorkerLaunchError, std::string("socketpair: ") + std::strerror(errno));
  }
  // Reports exec failure from the child; closed by a successful exec.
  int status_pipe[2];
  if (::pipe2(status_pipe, O_CLOEXEC) != 0) {
    ::close(sock[0]);
    ::close(sock[1]);
    fail(Errc::WorkerLaunchError, std::string("pipe: ") + std::strerror(errno));
  }

  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {sock[0], sock[1], status_pipe[0], status_pipe[1]}) ::close(fd);
    fail(Errc::WorkerLaunchError, std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(sock[1], STDIN_FILENO);
    ::dup2(sock[1], STDOUT_FILENO);
    ::signal(SIGPIPE, SIG_DFL);
    ::execvp(argv[0], argv.data());
    const int err = errno;
    [[maybe_unused]] auto n = ::write(status_pipe[1], &err, sizeof err);
    ::_exit(127);
  }

  ::close(sock[1]);
  ::close(status_pipe[1]);
  int child_errno = 0;
  ssize_t got;
  do {
    got = ::read(status_pipe[0], &child_errno, sizeof child_errno);
  } while (got < 0 && errno == EINTR);
  ::close(status_pipe[0]);
  if (got > 0) {
    ::close(sock[0]);
    ::waitpid(pid, nullptr, 0);
    fail(Errc::WorkerLaunchError,
         "cannot launch '" + argv_words[0] + "': " + std::strerror(child_errno));
  }
  pid_ = pid;
  fd_ = sock[0];
}

WorkerProcess::~WorkerProcess() {
  try {
    close();
  } catch (...) {
  }
}

void WorkerProcess::crashed(const std::string& why) {
  // Reap (or kill) the child so a dead worker cannot be reused.
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
  if (pid_ > 0) {
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }
  fail(Errc::WorkerCrashed, "worker '" + command_ + "' " + why);
}

void WorkerProcess::write_all(std::span<const std::uint8_t> bytes, SteadyTime deadline) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    pollfd p{fd_, POLLOUT, 0};
    const int rc = ::poll(&p, 1, remaining_ms(deadline));
    if (rc < 0 && errno == EINTR) continue;
    if (rc == 0) crashed("timed out accepting input");
    const auto n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      crashed(std::string("closed its input: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

void WorkerProcess::read_exact(std::uint8_t* dst, std::size_t n, SteadyTime deadline) {
  std::size_t off = 0;
  while (off < n) {
    pollfd p{fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, remaining_ms(deadline));
    if (rc < 0 && errno == EINTR) continue;
    if (rc == 0) crashed("did not answer within the I/O timeout");
    const auto got = ::recv(fd_, dst + off, n - off, 0);
    if (got < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      crashed(std::string("read failed: ") + std::strerror(errno));
    }
    if (got == 0) crashed("exited mid-call");
    off += static_cast<std::size_t>(got);
  }
}

Frame WorkerProcess::exchange(std::span<const std::uint8_t> request, HookId hook) {
  if (fd_ < 0) fail(Errc::WorkerCrashed, "worker '" + command_ + "' is not running");
  const auto deadline = std::chrono::steady_clock::now() + options_.io_timeout;
  write_all(request, deadline);

  std::vector<std::uint8_t> response(4);
  read_exact(response.data(), 4, deadline);
  const std::uint32_t len = static_cast<std::uint32_t>(response[0]) |
                            static_cast<std::uint32_t>(response[1]) << 8 |
                            static_cast<std::uint32_t>(response[2]) << 16 |
                            static_cast<std::uint32_t>(response[3]) << 24;
  // Grow as data arrives so a garbage length cannot force a huge allocation.
  constexpr std::size_t kChunk = 1 << 20;
  while (response.size() - 4 < len) {
    const auto before = response.size();
    const auto step = std::min<std::size_t>(kChunk, len - (before - 4));
    response.resize(before + step);
    read_exact(response.data() + before, step, deadline);
  }

  Frame frame;
  try {
    frame = decode_frame(response);
  } catch (const Error& e) {
    fail(Errc::ProtocolError, "malformed response frame: " + std::string(e.what()));
  }
  if (frame.hook != hook) {
    fail(Errc::ProtocolError, "response hook " + std::string(hook_name(frame.hook)) +
                                  " does not echo request hook " + std::string(hook_name(hook)));
  }
  if (auto it = frame.ctx.find("error"); it != frame.ctx.end()) {
    fail(Errc::ProtocolError, "worker reported an error in " + std::string(hook_name(hook)) +
                                  ": " + it->second);
  }
  return frame;
}

int WorkerProcess::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_WR);
    ::close(fd_);
    fd_ = -1;
  }
  if (pid_ <= 0) return -1;
  int status = 0;
  const auto deadline = std::chrono::steady_clock::now() + options_.io_timeout;
  for (;;) {
    const pid_t r = ::waitpid(pid_, &status, WNOHANG);
    if (r == pid_ || (r < 0 && errno != EINTR)) break;
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  pid_ = -1;
  return status;
}

}  // namespace mlh
