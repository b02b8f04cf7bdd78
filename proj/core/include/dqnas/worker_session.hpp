#pragma once

// Child-process training workers speaking the newline-delimited JSON protocol
// over their standard input and output.

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>

#include <sys/types.h>

#include <nlohmann/json.hpp>

#include "dqnas/error.hpp"
#include "dqnas/evaluation.hpp"

namespace dqnas {

/// The worker answered a request with an "error" message; the session stays usable.
class WorkerReportedError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

class WorkerSession {
 public:
  /// Runs `command` through /bin/sh in its own process group and waits for the
  /// hello message. Throws EvaluatorUnavailable, WorkerCrashed, EvaluationTimeout,
  /// ProtocolError.
  WorkerSession(const std::string& command, std::chrono::milliseconds timeout);
  ~WorkerSession();

  WorkerSession(const WorkerSession&) = delete;
  WorkerSession& operator=(const WorkerSession&) = delete;

  /// One request, one response with the same id. Throws WorkerCrashed,
  /// EvaluationTimeout, ProtocolError, WorkerReportedError.
  EvaluationResult evaluate(const EvaluationRequest& req);

  const nlohmann::json& hello() const { return hello_; }
  pid_t pid() const { return pid_; }

 private:
  nlohmann::json read_message(std::chrono::steady_clock::time_point deadline);
  void write_line(const std::string& line);
  void shutdown();

  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
  std::chrono::milliseconds timeout_;
  nlohmann::json hello_;
};

/// Evaluator backed by one worker process, restarted after crashes, timeouts and
/// protocol desyncs. When a worker cannot be brought up `max_start_attempts`
/// times in a row, EvaluatorUnavailable is raised.
class ExternalEvaluator : public Evaluator {
 public:
  ExternalEvaluator(std::string command, std::chrono::milliseconds timeout,
                    int max_start_attempts = 3);
  ~ExternalEvaluator() override;

  EvaluationResult evaluate(const EvaluationRequest& req) override;
  std::string name() const override { return "external"; }

  std::size_t starts() const { return starts_; }

 private:
  void ensure_session();

  std::string command_;
  std::chrono::milliseconds timeout_;
  int max_start_attempts_;
  std::unique_ptr<WorkerSession> session_;
  std::size_t starts_ = 0;
};

}  // namespace dqnas
