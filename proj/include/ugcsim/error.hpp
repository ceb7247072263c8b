#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ugcsim {

/// Process exit codes shared by every CLI subcommand.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kBackend = 3,
  kDataIntegrity = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kUsage; }
};

/// Invalid configuration value. `field` names the offending key when known.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string field = {})
      : Error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A value violates a documented precondition (malformed action, bad shape).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Transport failure, exhausted retries, or a backend that cannot answer.
class BackendError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kBackend; }
};

class CacheMissError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// Artifacts on disk are malformed, incomplete, or mixed across configs.
class DataIntegrityError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override {
    return ExitCode::kDataIntegrity;
  }
};

}  // namespace ugcsim
