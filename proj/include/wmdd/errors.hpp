#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace wmdd {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor or layer shapes. `layer` is the offending layer index
// when the failure happened inside a network, otherwise -1.
struct ShapeError : Error {
  ShapeError(const std::string& what, int layer = -1) : Error(what), layer(layer) {}
  int layer;
};

// Malformed or inconsistent dataset input.
struct DataError : Error {
  using Error::Error;
};

// Invalid configuration value; `field` names the offending key.
struct ConfigError : Error {
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field(std::move(field)) {}
  std::string field;
};

}  // namespace wmdd
