#pragma once

#include <stdexcept>
#include <string>

namespace d3pr {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value. `field()` names the offending setting.
class ConfigError : public Error {
public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

/// Not enough (or unusable) data to estimate a model.
class FitError : public Error {
public:
  using Error::Error;
};

/// Non-finite or otherwise invalid input values.
class DataError : public Error {
public:
  using Error::Error;
};

/// Factorization or divergence failure.
class NumericalError : public Error {
public:
  using Error::Error;
};

class AlignmentError : public Error {
public:
  using Error::Error;
};

class ProjectionError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// Malformed text in a dataset or checkpoint. `line()` is 1-based, 0 if unknown.
class ParseError : public Error {
public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// Well-formed document that is missing a required field or has the wrong type.
class SchemaError : public Error {
public:
  SchemaError(std::string field, std::string detail)
      : Error("field '" + field + "': " + detail), field_(std::move(field)), detail_(std::move(detail)) {}
  const std::string& field() const noexcept { return field_; }
  const std::string& detail() const noexcept { return detail_; }

private:
  std::string field_;
  std::string detail_;
};

}  // namespace d3pr
