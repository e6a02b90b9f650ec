#pragma once

#include <stdexcept>
#include <string>

namespace sbglm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Mismatched sizes between inputs.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure (indefinite matrix, degenerate estimate).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Cholesky factorization hit a nonpositive pivot.
class NotPositiveDefinite : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Malformed input file or geometry.
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace sbglm
