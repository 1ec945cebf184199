#pragma once

#include <cstdio>
#include <functional>
#include <string>
#include <utility>

namespace rematch::log {

using Sink = std::function<void(const std::string &)>;

inline Sink &warning_sink() {
  static Sink sink = [](const std::string &msg) {
    std::fprintf(stderr, "warning: %s\n", msg.c_str());
  };
  return sink;
}

inline void warn(const std::string &msg) {
  if (warning_sink()) warning_sink()(msg);
}

/// Swaps the warning sink for the lifetime of the guard (tests use it to
/// capture or silence warnings).
class ScopedSink {
public:
  explicit ScopedSink(Sink s) : saved_(std::exchange(warning_sink(), std::move(s))) {}
  ~ScopedSink() { warning_sink() = std::move(saved_); }
  ScopedSink(const ScopedSink &) = delete;
  ScopedSink &operator=(const ScopedSink &) = delete;

private:
  Sink saved_;
};

} // namespace rematch::log
