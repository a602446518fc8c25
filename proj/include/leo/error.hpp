#pragma once

#include <stdexcept>
#include <string>

namespace leo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or mismatched sequence lengths.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced by a forward op or found in a gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data: scene files, configs, checkpoints.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autodiff machinery (backward without a record, non-scalar loss).
class AutodiffError : public Error {
 public:
  using Error::Error;
};

}  // namespace leo
