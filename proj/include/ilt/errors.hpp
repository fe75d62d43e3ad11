#pragma once

#include <stdexcept>
#include <string>

namespace ilt {

/// Tensor or table dimensions do not agree.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or infinity reached a place that requires finite values.
/// Training aborts on this error (CLI exit code 2).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or missing configuration (CLI exit code 1).
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace ilt
