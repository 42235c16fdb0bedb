#pragma once

// Blocking subprocess execution with stdout/stderr capture, wall-time limit
// and external cancellation. The child is placed in its own process group so
// a timeout or cancel kills the whole tree.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstring>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "minigrid/errors.hpp"

namespace minigrid {

struct SubprocessResult {
  int exit_code = -1;
  bool timed_out = false;
  bool cancelled = false;
  std::string stdout_bytes;
  std::string stderr_bytes;
};

using CancelFlag = std::shared_ptr<std::atomic<bool>>;

inline SubprocessResult run_subprocess(const std::vector<std::string>& argv,
                                       const std::string& workdir,
                                       const std::map<std::string, std::string>& extra_env,
                                       std::uint64_t wall_time_s,
                                       CancelFlag cancel = nullptr) {
  if (argv.empty()) throw Error("BAD_COMMAND", "empty argv");

  int out_pipe[2], err_pipe[2];
  if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0)
    throw Error("OS_ERROR", std::string("pipe: ") + std::strerror(errno));

  pid_t pid = fork();
  if (pid < 0) throw Error("OS_ERROR", std::string("fork: ") + std::strerror(errno));

  if (pid == 0) {
    setpgid(0, 0);
    if (!workdir.empty() && chdir(workdir.c_str()) != 0) _exit(127);
    dup2(out_pipe[1], STDOUT_FILENO);
    dup2(err_pipe[1], STDERR_FILENO);
    close(out_pipe[0]);
    close(out_pipe[1]);
    close(err_pipe[0]);
    close(err_pipe[1]);
    for (const auto& [k, v] : extra_env) setenv(k.c_str(), v.c_str(), 1);
    std::vector<char*> cargv;
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    execvp(cargv[0], cargv.data());
    _exit(127);
  }

  setpgid(pid, pid); // also from the parent side, to close the race
  close(out_pipe[1]);
  close(err_pipe[1]);
  fcntl(out_pipe[0], F_SETFL, O_NONBLOCK);
  fcntl(err_pipe[0], F_SETFL, O_NONBLOCK);

  SubprocessResult result;
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(wall_time_s);
  bool use_deadline = wall_time_s > 0;
  bool killed = false;

  int open_fds = 2;
  struct pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  char buf[4096];

  auto drain = [&](int idx, std::string& sink) {
    for (;;) {
      ssize_t n = read(fds[idx].fd, buf, sizeof buf);
      if (n > 0) {
        sink.append(buf, std::size_t(n));
      } else if (n == 0) {
        close(fds[idx].fd);
        fds[idx].fd = -1;
        --open_fds;
        return;
      } else {
        if (errno == EAGAIN || errno == EWOULDBLOCK) return;
        close(fds[idx].fd);
        fds[idx].fd = -1;
        --open_fds;
        return;
      }
    }
  };

  while (open_fds > 0) {
    if (!killed) {
      bool want_kill = false;
      if (cancel && cancel->load()) {
        result.cancelled = true;
        want_kill = true;
      } else if (use_deadline && std::chrono::steady_clock::now() >= deadline) {
        result.timed_out = true;
        want_kill = true;
      }
      if (want_kill) {
        kill(-pid, SIGKILL);
        killed = true;
      }
    }
    int rc = poll(fds, 2, 50);
    if (rc < 0 && errno != EINTR)
      break;
    for (int i = 0; i < 2; ++i)
      if (fds[i].fd >= 0 && (fds[i].revents & (POLLIN | POLLHUP)))
        drain(i, i == 0 ? result.stdout_bytes : result.stderr_bytes);
  }
  for (int i = 0; i < 2; ++i)
    if (fds[i].fd >= 0) close(fds[i].fd);

  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (WIFEXITED(status))
    result.exit_code = WEXITSTATUS(status);
  else if (WIFSIGNALED(status))
    result.exit_code = 128 + WTERMSIG(status);
  return result;
}

} // namespace minigrid
