#ifndef LABGRADE_ERRORS_HPP_
#define LABGRADE_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace labgrade {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data is well-formed but violates a domain bound (exit code 1).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A JSONL record could not be parsed against the corpus schema.
class SchemaError : public ValidationError {
 public:
  SchemaError(std::size_t line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyDocument : public ValidationError {
 public:
  EmptyDocument() : ValidationError("document is empty") {}
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(long expected, long actual)
      : Error("dimension mismatch: expected " + std::to_string(expected) + ", got " +
              std::to_string(actual)) {}
};

class UnknownDimension : public ValidationError {
 public:
  explicit UnknownDimension(const std::string& id) : ValidationError("unknown rubric dimension '" + id + "'") {}
};

class IncompleteReport : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class ModeMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Checkpoint directory is missing, corrupt, or fails its manifest check.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace labgrade

#endif  // LABGRADE_ERRORS_HPP_
