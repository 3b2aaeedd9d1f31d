#pragma once

#include <stdexcept>
#include <string>

namespace spgs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (dataset rows, files, flags).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The data cannot support the requested estimate (empty risk set, zero variance).
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

/// Newton iteration did not reach the score tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int iterations, double score_norm)
      : Error(what), iterations_(iterations), score_norm_(score_norm) {}
  int iterations() const noexcept { return iterations_; }
  double score_norm() const noexcept { return score_norm_; }

 private:
  int iterations_;
  double score_norm_;
};

/// Monotone likelihood: the coefficient vector diverges.
class SeparationError : public Error {
 public:
  using Error::Error;
};

}  // namespace spgs
