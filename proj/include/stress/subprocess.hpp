#pragma once

#include <sys/types.h>

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace stress {

// Child process with piped stdin/stdout for line-oriented protocols.
// stderr is inherited. The destructor closes stdin and reaps the child,
// killing it if it does not exit promptly.
class Subprocess {
 public:
  // Runs `command` through /bin/sh -c.
  explicit Subprocess(const std::string& command);
  ~Subprocess();

  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  // Writes line + '\n'. Throws ProtocolError if the pipe is closed.
  void write_line(std::string_view line);

  // Next line without the trailing newline; nullopt on EOF.
  // Throws TimeoutError when nothing complete arrives within `timeout`.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout);

  void close_stdin();
  bool running();
  pid_t pid() const noexcept { return pid_; }

 private:
  void reap(std::chrono::milliseconds grace);

  pid_t pid_ = -1;
  int stdin_fd_ = -1;
  int stdout_fd_ = -1;
  std::string buffer_;
  bool eof_ = false;
  bool reaped_ = false;
};

}  // namespace stress
