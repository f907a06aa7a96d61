#ifndef ADR_ERRORS_HPP
#define ADR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace adr {

/// Incompatible tensor shapes. Message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite value where the contract requires a finite one.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or user input.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File parsing or serialization failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace adr

#endif  // ADR_ERRORS_HPP
