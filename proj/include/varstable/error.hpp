#pragma once

#include <stdexcept>
#include <string>

namespace varstable {

// Every failure a run can surface maps onto exactly one of these, and each
// carries the process exit status the CLI reports for it.
enum class ExitStatus : int {
  kOk = 0,
  kCheckFailed = 1,
  kInputError = 2,
  kNumericalError = 3,
  kResourceError = 4,
  kInternalError = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ExitStatus status, std::string module, const std::string& what)
      : std::runtime_error(what), status_(status), module_(std::move(module)) {}

  ExitStatus status() const { return status_; }
  const std::string& module() const { return module_; }

 private:
  ExitStatus status_;
  std::string module_;
};

/// Caller passed something outside an operation's preconditions.
class InputError : public Error {
 public:
  InputError(std::string module, const std::string& what)
      : Error(ExitStatus::kInputError, std::move(module), what) {}
};

/// Quadrature or inversion failed to reach its tolerance.
class NumericalError : public Error {
 public:
  NumericalError(std::string module, const std::string& what)
      : Error(ExitStatus::kNumericalError, std::move(module), what) {}
};

/// Grid too small (aliasing) or a point fell outside grid coverage.
class GridError : public Error {
 public:
  GridError(std::string module, const std::string& what)
      : Error(ExitStatus::kNumericalError, std::move(module), what) {}
};

/// A declared model bound is inconsistent with what the model evaluates to.
class ModelError : public Error {
 public:
  ModelError(std::string module, const std::string& what)
      : Error(ExitStatus::kInputError, std::move(module), what) {}
};

/// Budget exceeded (cache misses, truncation remainders, path budgets).
class ResourceError : public Error {
 public:
  ResourceError(std::string module, const std::string& what)
      : Error(ExitStatus::kResourceError, std::move(module), what) {}
};

}  // namespace varstable
