#include "nv/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <mutex>

#include "nv/errors.hpp"

namespace nv {

namespace {

constexpr std::size_t kMaxLine = 64u << 20;

std::string find_program(const std::string& name) {
  if (name.find('/') != std::string::npos) return name;
  const char* path = std::getenv("PATH");
  std::string_view dirs = path ? path : "/usr/bin:/bin";
  while (!dirs.empty()) {
    auto colon = dirs.find(':');
    std::string dir(dirs.substr(0, colon));
    dirs = colon == std::string_view::npos ? std::string_view{} : dirs.substr(colon + 1);
    if (dir.empty()) dir = ".";
    std::string candidate = dir + "/" + name;
    if (::access(candidate.c_str(), X_OK) == 0) return candidate;
  }
  return name;
}

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

}  // namespace

std::vector<std::string> split_command(std::string_view command) {
  std::vector<std::string> out;
  std::string cur;
  bool in_token = false;
  char quote = 0;
  for (char c : command) {
    if (quote) {
      if (c == quote) quote = 0;
      else cur += c;
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
      in_token = true;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      if (in_token) out.push_back(std::move(cur));
      cur.clear();
      in_token = false;
    } else {
      cur += c;
      in_token = true;
    }
  }
  if (in_token) out.push_back(std::move(cur));
  return out;
}

std::unique_ptr<ChildProcess> ChildProcess::spawn(const std::vector<std::string>& argv,
                                                  const SpawnOptions& options) {
  if (argv.empty()) throw SpawnError("empty worker command");
  ignore_sigpipe();

  // Everything the child needs is prepared before fork.
  std::string program = find_program(argv[0]);
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  int to_child[2], from_child[2], errpipe[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) throw SpawnError(std::string("pipe: ") + std::strerror(errno));
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw SpawnError(std::string("pipe: ") + std::strerror(errno));
  }
  if (::pipe2(errpipe, O_CLOEXEC) != 0) {
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
    throw SpawnError(std::string("pipe: ") + std::strerror(errno));
  }
  int devnull = ::open("/dev/null", O_WRONLY | O_CLOEXEC);
  long max_fd = ::sysconf(_SC_OPEN_MAX);
  if (max_fd < 0 || max_fd > 65536) max_fd = 65536;

  pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1], errpipe[0], errpipe[1], devnull})
      if (fd >= 0) ::close(fd);
    throw SpawnError(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(to_child[0], 0);
    ::dup2(from_child[1], 1);
    if (devnull >= 0) ::dup2(devnull, 2);
    int keep = errpipe[1];
    for (int fd = 3; fd < max_fd; ++fd)
      if (fd != keep) ::close(fd);
    if (options.isolate_network) {
#ifdef CLONE_NEWNET
      // Needs unprivileged user namespaces; without them the child keeps
      // the host network and the call simply fails.
      if (::unshare(CLONE_NEWNET) != 0) (void)::unshare(CLONE_NEWUSER | CLONE_NEWNET);
#endif
    }
    if (options.address_space_bytes) {
      rlimit lim{*options.address_space_bytes, *options.address_space_bytes};
      ::setrlimit(RLIMIT_AS, &lim);
    }
    if (options.cpu_seconds) {
      auto secs = static_cast<rlim_t>(*options.cpu_seconds);
      rlimit lim{secs, secs + 1};
      ::setrlimit(RLIMIT_CPU, &lim);
    }
    ::execv(program.c_str(), args.data());
    int err = errno;
    ssize_t ignored = ::write(keep, &err, sizeof err);
    (void)ignored;
    ::_exit(127);
  }

  ::close(to_child[0]);
  ::close(from_child[1]);
  ::close(errpipe[1]);
  if (devnull >= 0) ::close(devnull);

  int child_errno = 0;
  ssize_t n;
  do {
    n = ::read(errpipe[0], &child_errno, sizeof child_errno);
  } while (n < 0 && errno == EINTR);
  ::close(errpipe[0]);

  std::unique_ptr<ChildProcess> proc(new ChildProcess());
  proc->pid_ = pid;
  proc->in_fd_ = to_child[1];
  proc->out_fd_ = from_child[0];
  if (n == static_cast<ssize_t>(sizeof child_errno)) {
    proc->wait();
    throw SpawnError("cannot execute '" + argv[0] + "': " + std::strerror(child_errno));
  }
  return proc;
}

ChildProcess::~ChildProcess() {
  if (in_fd_ >= 0) ::close(in_fd_);
  if (out_fd_ >= 0) ::close(out_fd_);
  if (!reaped_ && pid_ > 0) {
    kill();
    wait();
  }
}

bool ChildProcess::write_all(std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::write(in_fd_, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

ChildProcess::Read ChildProcess::read_line(std::string& out,
                                           std::chrono::steady_clock::time_point deadline) {
  while (true) {
    auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      out = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return Read::line;
    }
    if (buffer_.size() > kMaxLine) return Read::overflow;
    auto now = std::chrono::steady_clock::now();
    if (now >= deadline) return Read::timeout;
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
    pollfd pfd{out_fd_, POLLIN, 0};
    int r = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(ms, 60000)));
    if (r < 0) {
      if (errno == EINTR) continue;
      return Read::eof;
    }
    if (r == 0) continue;
    char buf[65536];
    ssize_t n = ::read(out_fd_, buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return Read::eof;
    }
    if (n == 0) {
      out = std::move(buffer_);
      buffer_.clear();
      return Read::eof;
    }
    buffer_.append(buf, static_cast<std::size_t>(n));
  }
}

void ChildProcess::kill() {
  if (pid_ > 0 && !reaped_) {
    ::kill(-pid_, SIGKILL);
    ::kill(pid_, SIGKILL);
  }
}

int ChildProcess::wait() {
  if (reaped_ || pid_ <= 0) return 0;
  int status = 0;
  while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
  }
  reaped_ = true;
  return status;
}

std::string self_exe_dir() {
  std::error_code ec;
  auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
  if (ec) return ".";
  return p.parent_path().string();
}

}  // namespace nv
