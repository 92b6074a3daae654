#pragma once

#include <stdexcept>
#include <string>

namespace mfrate {

// Invalid parameters or schema violations, detected before any compute.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A requested object would exceed the configured memory/dimension budget.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or a non-convergent numerical kernel.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mfrate
