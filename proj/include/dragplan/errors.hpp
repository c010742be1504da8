#pragma once

#include <stdexcept>
#include <string>

namespace dragplan {

/// Base of every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-range configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine could not produce a trustworthy result (CLI exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// The flatness map is undefined because the required thrust vector vanishes.
class SingularThrustError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// The simulated state blew up (non-finite or beyond the divergence bound).
class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Linear system could not be solved even after regularization.
class SingularSystemError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// File could not be opened, read, or written (CLI exit code 4).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dragplan
