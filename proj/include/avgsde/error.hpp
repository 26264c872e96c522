#pragma once

#include <stdexcept>
#include <string>

namespace avgsde {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or precondition violation.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Missing or inconsistent configuration (unknown keys, missing averaged drift, ...).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// A drift or diffusion evaluation produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Evaluation of a singular kernel exactly at its singularity.
class SingularEvaluationError : public EvaluationError {
 public:
  using EvaluationError::EvaluationError;
};

/// The simulated state became non-finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Time step too coarse for the requested functional.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// Histogram estimators only support d <= 3.
class UnsupportedDimensionError : public Error {
 public:
  using Error::Error;
};

}  // namespace avgsde
