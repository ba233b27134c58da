#pragma once

#include <stdexcept>
#include <string>

namespace resmatch {

/// Invalid shapes, hyperparameters or flags supplied by the caller.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Input data that cannot be processed (empty datasets, undersized images, bad files).
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// Operation invoked in the wrong lifecycle state.
class StateError : public std::logic_error {
 public:
  explicit StateError(const std::string& what) : std::logic_error(what) {}
};

/// Values outside the numeric domain of an operation.
class NumericError : public std::domain_error {
 public:
  explicit NumericError(const std::string& what) : std::domain_error(what) {}
};

}  // namespace resmatch
