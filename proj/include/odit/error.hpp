#pragma once

#include <stdexcept>
#include <string>

namespace odit {

// Bad input: shapes, parameter ranges, malformed files. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Well-formed input that still cannot be processed (degenerate data, EM failure, ...).
// The CLI maps this to exit code 3.
class ComputationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace odit
