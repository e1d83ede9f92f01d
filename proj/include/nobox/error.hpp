#pragma once

#include <stdexcept>
#include <string>

namespace nobox {

// Diagnostic category; the CLI maps each one to a distinct exit code.
enum class ErrorKind {
  kInvalidArgument = 2,
  kInfeasible = 3,
  kIo = 4,
  kDivergence = 5,
  kUnavailable = 6,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::kInvalidArgument, what);
}

}  // namespace nobox
