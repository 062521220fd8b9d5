#pragma once

#include <stdexcept>
#include <string>

namespace tabsyn {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data: CSV structure, schema violations, unknown values.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor or sequence dimensions that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values reached a place that requires finite numbers.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace tabsyn
