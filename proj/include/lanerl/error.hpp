#pragma once

#include <stdexcept>
#include <string>

namespace lanerl {

/// Base of all errors raised by the library. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class MapError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Contract violations by the caller (wrong shapes, stepping a finished episode, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace lanerl
