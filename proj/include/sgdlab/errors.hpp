#pragma once

#include <stdexcept>
#include <string>

namespace sgdlab {

/// Bad argument to a numerical routine (dimension mismatch, index out of range).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration: compressor parameters, estimator parameters, config files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A problem that fails the strong convexity prerequisite.
class ProblemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A stepsize or Lyapunov weight outside the admissible region of the convergence bound.
class CertificateError : public std::runtime_error {
 public:
  CertificateError(const std::string& what, double admissible_max)
      : std::runtime_error(what), admissible_max_(admissible_max) {}

  double admissible_max() const { return admissible_max_; }

 private:
  double admissible_max_;
};

/// Numerical failure during a run (non-finite iterate, solver non-convergence).
class DiagnosticError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Enumeration of an outcome space that is too large.
class UnsupportedSizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sgdlab
