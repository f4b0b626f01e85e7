#pragma once

#include <stdexcept>
#include <string>

namespace mfgpi {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or vector dimensions do not compose.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or unsupported combination of settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A measure-dependent quantity was requested from empty statistics.
class MeasureError : public Error {
 public:
  using Error::Error;
};

/// Duplicate or out-of-range particle indices in a transition set.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// A loss or trajectory became non-finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// ODE integration failed (step size underflow or non-finite state).
class IntegrationError : public Error {
 public:
  using Error::Error;
};

/// Reference solution could not be constructed.
class ReferenceError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint does not match the network shapes implied by a config.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace mfgpi
