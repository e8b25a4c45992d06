#pragma once

#include <stdexcept>
#include <string>

namespace netloc {

// Failure categories map one-to-one onto CLI exit codes.
enum class ErrorKind { Usage = 2, Validation = 3, Statistical = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Malformed input data or a violated precondition on data.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

/// A statistical procedure could not produce a result (non-convergence, degeneracy).
class StatisticalError : public Error {
 public:
  explicit StatisticalError(const std::string& what) : Error(ErrorKind::Statistical, what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

}  // namespace netloc
