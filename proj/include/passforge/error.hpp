#pragma once

#include <stdexcept>
#include <string>

namespace passforge {

// Bad configuration values (generator configs, training configs, flags).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Inputs that violate an operation's preconditions (empty sets, missing data).
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed files: JSON, CSV, checkpoints.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace passforge
