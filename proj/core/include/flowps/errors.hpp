#pragma once

#include <stdexcept>
#include <string>

namespace flowps {

// Base class for every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An argument lies outside the mathematical domain of an operation.
struct DomainError : Error {
  using Error::Error;
};

// A formula is evaluated at a point where it is singular (division by a
// vanishing coefficient, evaluation at an excluded endpoint, ...).
struct SingularityError : Error {
  using Error::Error;
};

// The caller violated an API contract (dimension mismatch, condition passed
// to an unconditional field, empty batch, ...).
struct UsageError : Error {
  using Error::Error;
};

// An iterative optimization produced a non-finite iterate.
struct OptimizationError : Error {
  using Error::Error;
};

// A sampler produced a non-finite state.
struct SolverError : Error {
  using Error::Error;
};

// Training diverged.
struct TrainingError : Error {
  using Error::Error;
};

// A configuration file could not be parsed or validated.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace flowps
