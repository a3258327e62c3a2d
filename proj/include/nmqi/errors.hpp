#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace nmqi {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A generator map produced an operator outside its detected subspace.
class SubspaceEscapeError : public Error {
 public:
  using Error::Error;
};

class MemoryBudgetError : public Error {
 public:
  using Error::Error;
};

class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefiniteError : public Error {
 public:
  using Error::Error;
};

class TimeMismatchError : public Error {
 public:
  using Error::Error;
};

class WindowTooSmallError : public Error {
 public:
  using Error::Error;
};

struct Diagnostic {
  int line = 0;  // 0 when the problem is not tied to a line
  std::string message;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<Diagnostic> diagnostics);
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

}  // namespace nmqi
