#include "radood/errors.hpp"

namespace radood {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::SingularMatrix: return "singular-matrix";
    case ErrorKind::ConvergenceFailure: return "convergence-failure";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::FormatError: return "format-error";
    case ErrorKind::NumericFailure: return "numeric-failure";
    case ErrorKind::TrainingFailure: return "training-failure";
    case ErrorKind::DependencyError: return "dependency-error";
    case ErrorKind::ConfigError: return "config-error";
    case ErrorKind::IoError: return "io-error";
  }
  return "unknown";
}

}  // namespace radood
