#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mecal {

/// Bad input data or configuration (CLI exit code 2).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure inside a fitter (CLI exit code 3).
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularDesignError : public FitError {
 public:
  SingularDesignError(const std::string& column)
      : FitError("design matrix is rank deficient at column '" + column + "'"),
        column_(column) {}
  const std::string& column() const { return column_; }

 private:
  std::string column_;
};

class SeparationError : public FitError {
 public:
  using FitError::FitError;
};

/// Iteration limit reached; carries the last iterate.
class NonConvergenceError : public FitError {
 public:
  NonConvergenceError(const std::string& what, std::vector<double> last_iterate)
      : FitError(what), last_(std::move(last_iterate)) {}
  const std::vector<double>& last_iterate() const { return last_; }

 private:
  std::vector<double> last_;
};

class InsufficientDataError : public FitError {
 public:
  using FitError::FitError;
};

}  // namespace mecal
