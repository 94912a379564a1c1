#pragma once

#include <stdexcept>
#include <string>

namespace vseg {

/// Raised when operand shapes disagree. axis() names the offending dimension
/// ("batch", "channels", "height", "width", "kernel_h", ...).
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string axis, const std::string& message)
      : std::invalid_argument(message), axis_(std::move(axis)) {}

  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

/// Non-finite values (NaN/Inf) in losses or gradients.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing, unreadable or malformed input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace vseg
