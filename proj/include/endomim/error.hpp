// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace endomim {

/// Invalid configuration value (bad ratio, indivisible sizes, ...). CLI exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Caller violated an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Shapes that do not agree for an operation.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// File or format problems (checkpoint, manifest, PNG).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

inline void require_config(bool condition, const std::string& message) {
  if (!condition) throw ConfigError(message);
}

}  // namespace endomim
