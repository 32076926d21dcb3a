#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace radood {

enum class ErrorKind {
  InvalidArgument,
  SingularMatrix,
  ConvergenceFailure,
  InsufficientData,
  FormatError,
  NumericFailure,
  TrainingFailure,
  DependencyError,
  ConfigError,
  IoError,
};

const char* to_string(ErrorKind kind);

// Base of every error thrown by the library. The kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorKind::InvalidArgument, what) {}
};

class SingularMatrix : public Error {
 public:
  explicit SingularMatrix(const std::string& what) : Error(ErrorKind::SingularMatrix, what) {}
};

class ConvergenceFailure : public Error {
 public:
  ConvergenceFailure(const std::string& what, double last_residual, int iterations)
      : Error(ErrorKind::ConvergenceFailure, what),
        last_residual_(last_residual),
        iterations_(iterations) {}
  double last_residual() const noexcept { return last_residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double last_residual_;
  int iterations_;
};

class InsufficientData : public Error {
 public:
  explicit InsufficientData(const std::string& what) : Error(ErrorKind::InsufficientData, what) {}
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(ErrorKind::FormatError, what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class NumericFailure : public Error {
 public:
  NumericFailure(const std::string& what, int layer)
      : Error(ErrorKind::NumericFailure, what + " (layer " + std::to_string(layer) + ")"),
        layer_(layer) {}
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

class TrainingFailure : public Error {
 public:
  TrainingFailure(const std::string& what, int epoch)
      : Error(ErrorKind::TrainingFailure, what + " (epoch " + std::to_string(epoch) + ")"),
        epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class DependencyError : public Error {
 public:
  explicit DependencyError(const std::string& what) : Error(ErrorKind::DependencyError, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::ConfigError, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::IoError, what) {}
};

}  // namespace radood
