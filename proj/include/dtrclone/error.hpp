#pragma once

#include <stdexcept>
#include <string>

namespace dtrclone {

// Process exit codes used by the command-line tool.
enum class ExitCode : int { ok = 0, config = 2, data = 3, numerical = 4 };

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual ExitCode exit_code() const noexcept = 0;
};

class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::config; }
};

// Malformed or inconsistent input data (bad columns, duplicate visits, ...).
class DataError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::data; }
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::numerical; }
};

class SeparationError : public NumericalError {
 public:
  SeparationError(const std::string& column, const std::string& what)
      : NumericalError(what), column_(column) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

class RankDeficiencyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class PositivityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace dtrclone
