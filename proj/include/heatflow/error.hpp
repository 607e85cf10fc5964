#pragma once

#include <stdexcept>
#include <string>

namespace heatflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or unsupported option.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API misuse: shape or mesh mismatch, precondition violated by the caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Bad input data (non-finite samples, malformed files).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Point lies on or beyond the reach of the nearest-point projection.
class MedialAxisError : public Error {
 public:
  using Error::Error;
};

/// A linear solve or factorization failed.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// A flow step left the projection reach or broke energy monotonicity.
class StepSizeError : public Error {
 public:
  using Error::Error;
};

/// A fixed-point iteration is diverging.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace heatflow
