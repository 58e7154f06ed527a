#pragma once

#include <stdexcept>
#include <string>

namespace selforg {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A configuration field violates its constraint. field() names the field.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& constraint)
      : Error(field + ": " + constraint), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class UnstableConfigError : public Error {
 public:
  using Error::Error;
};

class TimestepError : public Error {
 public:
  using Error::Error;
};

class SignalError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class AnalysisError : public Error {
 public:
  using Error::Error;
};

}  // namespace selforg
