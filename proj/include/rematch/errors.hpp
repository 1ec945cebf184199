#pragma once

#include <stdexcept>
#include <string>

namespace rematch {

/// Failure categories. The CLI maps each one onto a process exit code.
enum class ErrorKind { usage, io, topology, numerical };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string &w) : Error(ErrorKind::usage, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string &w) : Error(ErrorKind::io, w) {}
};
struct TopologyError : Error {
  explicit TopologyError(const std::string &w) : Error(ErrorKind::topology, w) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string &w) : Error(ErrorKind::numerical, w) {}
};

inline int exit_code(ErrorKind k) {
  switch (k) {
  case ErrorKind::usage: return 2;
  case ErrorKind::io: return 3;
  case ErrorKind::topology: return 4;
  case ErrorKind::numerical: return 5;
  }
  return 1;
}

} // namespace rematch
