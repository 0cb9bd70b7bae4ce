#include "feddkc/error.hpp"

namespace feddkc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidKnowledge: return "InvalidKnowledge";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::InvalidTarget: return "InvalidTarget";
    case ErrorCode::InvalidKernel: return "InvalidKernel";
    case ErrorCode::DegenerateKnowledge: return "DegenerateKnowledge";
    case ErrorCode::BracketFailure: return "BracketFailure";
    case ErrorCode::ToleranceNotMet: return "ToleranceNotMet";
    case ErrorCode::NumericalDivergence: return "NumericalDivergence";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::PartitionFailure: return "PartitionFailure";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IncomparableRuns: return "IncomparableRuns";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

ToleranceNotMet::ToleranceNotMet(double estimate, double residual, int iterations)
    : Error(ErrorCode::ToleranceNotMet,
            "bisection stopped after " + std::to_string(iterations) +
                " iterations with residual " + std::to_string(residual)),
      estimate_(estimate),
      residual_(residual) {}

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : Error(ErrorCode::ParseError, source + ":" + std::to_string(line) + ": " + what),
      line_(line) {}

ConfigError::ConfigError(const std::string& field, const std::string& what)
    : Error(ErrorCode::ConfigError, field + ": " + what), field_(field) {}

}  // namespace feddkc
