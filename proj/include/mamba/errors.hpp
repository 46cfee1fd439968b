#pragma once

#include <stdexcept>
#include <string>

namespace mamba {

/// Operand shapes do not line up (e.g. D_in of a projection vs. input channels).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Caller asked for something the API does not support: bad arguments,
/// unknown names, empty inputs where a value is required.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A model or layer configuration that cannot be built.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mamba
