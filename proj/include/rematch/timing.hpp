#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace rematch {

/// Wall-clock record of pipeline stages, one entry per (job, stage) run.
struct JobLog {
  struct Entry {
    std::string job;
    std::string stage;
    double seconds;
  };
  std::vector<Entry> entries;

  void add(std::string job, std::string stage, double seconds) {
    entries.push_back({std::move(job), std::move(stage), seconds});
  }
  void append(const JobLog &other) { entries.insert(entries.end(), other.entries.begin(), other.entries.end()); }

  double total(const std::string &job) const {
    double t = 0;
    for (const auto &e : entries)
      if (e.job == job) t += e.seconds;
    return t;
  }
};

class Stopwatch {
public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  void restart() { start_ = std::chrono::steady_clock::now(); }

private:
  std::chrono::steady_clock::time_point start_;
};

/// Adds one JobLog entry when it goes out of scope; no-op with a null log.
class ScopedStage {
public:
  ScopedStage(JobLog *log, std::string job, std::string stage)
      : log_(log), job_(std::move(job)), stage_(std::move(stage)) {}
  ~ScopedStage() {
    if (log_) log_->add(job_, stage_, watch_.seconds());
  }
  ScopedStage(const ScopedStage &) = delete;
  ScopedStage &operator=(const ScopedStage &) = delete;

private:
  JobLog *log_;
  std::string job_, stage_;
  Stopwatch watch_;
};

} // namespace rematch
