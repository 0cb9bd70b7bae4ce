#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace feddkc {

enum class ErrorCode {
  InvalidKnowledge,
  DimensionMismatch,
  InvalidLabel,
  InvalidTarget,
  InvalidKernel,
  DegenerateKnowledge,
  BracketFailure,
  ToleranceNotMet,
  NumericalDivergence,
  ParseError,
  PartitionFailure,
  ConfigError,
  IncomparableRuns,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library. The code is stable and is what
// callers (CLI exit statuses, python bindings) dispatch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Bisection ran out of iterations; the midpoint of the last bracket is kept.
class ToleranceNotMet : public Error {
 public:
  ToleranceNotMet(double estimate, double residual, int iterations);

  double estimate() const noexcept { return estimate_; }
  double residual() const noexcept { return residual_; }

 private:
  double estimate_;
  double residual_;
};

// Malformed input file, with the 1-based line that failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A configuration value that violates a module invariant.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what);

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace feddkc
