#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace specgd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, out-of-range argument, or violated precondition.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Step size too large for the operator it is applied to.
class StabilityError : public Error {
 public:
  using Error::Error;
};

/// Singular linear system.
class SingularError : public Error {
 public:
  using Error::Error;
};

/// Iterates left the overflow guard. Carries the offending iteration.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t iteration, const std::string& what)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

/// Randomized search ran out of its budget.
class BudgetError : public Error {
 public:
  using Error::Error;
};

}  // namespace specgd
