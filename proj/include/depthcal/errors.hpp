#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace depthcal {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the mathematical domain of an operation (non-finite value,
/// non-positive depth, r <= 0 for a logarithmic fit, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Regressed depth at a control pixel is not positive; the controller holds.
class InvalidTargetError : public DomainError {
 public:
  using DomainError::DomainError;
};

class SingularFitError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver gave up. Carries the last iterate so callers can still
/// score it.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> last_iterate)
      : Error(what), last_iterate_(std::move(last_iterate)) {}
  const std::vector<double>& last_iterate() const { return last_iterate_; }

 private:
  std::vector<double> last_iterate_;
};

class DegenerateMetricError : public Error {
 public:
  using Error::Error;
};

class ArityError : public Error {
 public:
  using Error::Error;
};

class BehindCameraError : public Error {
 public:
  using Error::Error;
};

class NoObservationError : public Error {
 public:
  using Error::Error;
};

class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// Non-finite activation or gradient during online training. The estimator
/// has been rolled back to its frame-entry state when this is thrown.
class NumericalOverflowError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `line` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace depthcal
