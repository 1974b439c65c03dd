#pragma once

#include <stdexcept>
#include <string>

namespace optrack {

/// Inconsistent sizes between a program and the vectors handed to it.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A model or configuration that violates a structural invariant
/// (non-PSD diagonal block, empty bound box, rho <= 0, ...).
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf produced by an iteration; the message names where it appeared.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace optrack
