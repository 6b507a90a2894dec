#pragma once

#include <stdexcept>
#include <string>

namespace spcp {

/// Input violates a documented precondition (bad shape, out-of-range
/// parameter, malformed file). Maps to CLI exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative kernel (CG, power iteration) failed to reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spcp
