#include "dqnas/worker_session.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <thread>

#include <poll.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace dqnas {

namespace {

using Clock = std::chrono::steady_clock;

std::string errno_text() { return std::strerror(errno); }

}  // namespace

WorkerSession::WorkerSession(const std::string& command, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  int fds[2];
  if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw EvaluatorUnavailable("socketpair failed: " + errno_text());
  }

  posix_spawn_file_actions_t actions;
  posix_spawnattr_t attr;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);

  std::string sh = "sh";
  std::string dash_c = "-c";
  std::string cmd = command;
  char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};
  const int rc = posix_spawn(&pid_, "/bin/sh", &actions, &attr, argv, environ);
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  close(fds[1]);
  if (rc != 0) {
    close(fds[0]);
    pid_ = -1;
    throw EvaluatorUnavailable("cannot start worker: " + std::string(std::strerror(rc)));
  }
  fd_ = fds[0];

  try {
    hello_ = read_message(Clock::now() + timeout_);
    check_hello(hello_);
  } catch (...) {
    shutdown();
    throw;
  }
}

WorkerSession::~WorkerSession() { shutdown(); }

void WorkerSession::shutdown() {
  if (fd_ >= 0) {
    close(fd_);
    fd_ = -1;
  }
  if (pid_ <= 0) return;
  // Closing the socket is the polite stop signal; give the worker a moment.
  int status = 0;
  for (int i = 0; i < 20; ++i) {
    if (waitpid(pid_, &status, WNOHANG) == pid_) {
      kill(-pid_, SIGKILL);
      pid_ = -1;
      return;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  kill(-pid_, SIGKILL);
  waitpid(pid_, &status, 0);
  pid_ = -1;
}

void WorkerSession::write_line(const std::string& line) {
  std::size_t off = 0;
  while (off < line.size()) {
    const ssize_t n = send(fd_, line.data() + off, line.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw WorkerCrashed("worker stopped reading its input: " + errno_text());
    }
    off += static_cast<std::size_t>(n);
  }
}

nlohmann::json WorkerSession::read_message(Clock::time_point deadline) {
  for (;;) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        return nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        throw ProtocolError("worker sent a non-JSON line: " + line.substr(0, 200));
      }
    }

    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() <= 0) throw EvaluationTimeout("worker did not answer in time");
    pollfd p{fd_, POLLIN, 0};
    const int r = poll(&p, 1, static_cast<int>(std::min<std::int64_t>(left.count(), 1 << 30)));
    if (r < 0) {
      if (errno == EINTR) continue;
      throw WorkerCrashed("poll failed: " + errno_text());
    }
    if (r == 0) continue;

    char chunk[65536];
    const ssize_t n = recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw WorkerCrashed("worker connection failed: " + errno_text());
    }
    if (n == 0) throw WorkerCrashed("worker exited");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

EvaluationResult WorkerSession::evaluate(const EvaluationRequest& req) {
  if (fd_ < 0) throw WorkerCrashed("worker session is closed");
  write_line(request_message(req).dump() + "\n");
  const nlohmann::json msg = read_message(Clock::now() + timeout_);
  if (msg.is_object() && msg.value("type", std::string()) == "error") {
    if (msg.value("id", std::string()) != req.id) {
      throw ProtocolError("error message for unknown request " + msg.value("id", std::string()));
    }
    throw WorkerReportedError("worker failed request " + req.id + ": " +
                              msg.value("message", std::string("(no message)")));
  }
  EvaluationResult res = parse_result_message(msg);
  if (res.id != req.id) {
    throw ProtocolError("response id " + res.id + " does not match request " + req.id);
  }
  return res;
}

ExternalEvaluator::ExternalEvaluator(std::string command, std::chrono::milliseconds timeout,
                                     int max_start_attempts)
    : command_(std::move(command)), timeout_(timeout), max_start_attempts_(max_start_attempts) {
  if (command_.empty()) throw ConfigError("external evaluator needs a worker command");
  if (max_start_attempts_ < 1) throw ConfigError("max_start_attempts must be at least 1");
}

ExternalEvaluator::~ExternalEvaluator() = default;

void ExternalEvaluator::ensure_session() {
  if (session_) return;
  std::string last;
  for (int attempt = 0; attempt < max_start_attempts_; ++attempt) {
    try {
      session_ = std::make_unique<WorkerSession>(command_, timeout_);
      ++starts_;
      return;
    } catch (const Error& e) {
      last = e.what();
    }
  }
  throw EvaluatorUnavailable("worker '" + command_ + "' failed to start " +
                             std::to_string(max_start_attempts_) + " times: " + last);
}

EvaluationResult ExternalEvaluator::evaluate(const EvaluationRequest& req) {
  ensure_session();
  try {
    return session_->evaluate(req);
  } catch (const WorkerReportedError&) {
    throw;
  } catch (const Error&) {
    session_.reset();  // the stream can no longer be trusted
    throw;
  }
}

}  // namespace dqnas
