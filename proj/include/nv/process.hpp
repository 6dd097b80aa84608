#pragma once

// Child process with line-oriented pipes, used for out-of-process workers.

#include <sys/types.h>

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nv {

struct SpawnOptions {
  std::optional<std::size_t> address_space_bytes;
  std::optional<int> cpu_seconds;
  bool isolate_network = true;  // best effort; silently skipped when unavailable
};

// Splits a command line on whitespace; single and double quotes group.
std::vector<std::string> split_command(std::string_view command);

class ChildProcess {
 public:
  enum class Read { line, eof, timeout, overflow };

  // Throws SpawnError when the program cannot be started.
  static std::unique_ptr<ChildProcess> spawn(const std::vector<std::string>& argv,
                                             const SpawnOptions& options);
  ~ChildProcess();
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  // False when the child closed its stdin.
  bool write_all(std::string_view data);
  Read read_line(std::string& out, std::chrono::steady_clock::time_point deadline);

  void kill();
  // Reaps the child; returns the wait status.
  int wait();
  pid_t pid() const { return pid_; }

 private:
  ChildProcess() = default;
  pid_t pid_ = -1;
  int in_fd_ = -1;   // child's stdin
  int out_fd_ = -1;  // child's stdout
  bool reaped_ = false;
  std::string buffer_;
};

// Directory holding the running executable.
std::string self_exe_dir();

}  // namespace nv
