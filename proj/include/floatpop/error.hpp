#pragma once

#include <stdexcept>
#include <string>

namespace floatpop {

/// Base for every error the library raises. `exit_code()` maps to the CLI
/// convention: 2 input, 3 pipeline state, 4 numerical failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 4; }
};

/// Bad or missing input file, malformed header, invalid configuration.
class InputError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

class GeometryError : public InputError {
 public:
  GeometryError(const std::string& zone_id, const std::string& what)
      : InputError("zone '" + zone_id + "': " + what), zone_id_(zone_id) {}
  const std::string& zone_id() const noexcept { return zone_id_; }

 private:
  std::string zone_id_;
};

/// A stage was run out of order or against stale intermediate files.
class StateError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace floatpop
