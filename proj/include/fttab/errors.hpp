#pragma once

#include <stdexcept>
#include <string>

namespace fttab {

// Base for every error raised by the library. The CLI maps subclasses to
// process exit codes (usage 1, data 2, numeric 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// A metric with no defined value on the given inputs (e.g. AUC with one class).
class UndefinedMetricError : public NumericError {
 public:
  using NumericError::NumericError;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Data-side failures: malformed files, schema mismatches.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

// Bad configuration values or command-line usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fttab
