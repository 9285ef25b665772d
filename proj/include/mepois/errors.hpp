#pragma once

#include <stdexcept>
#include <string>

namespace mepois {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input (shapes, ranges, malformed files). The CLI maps these to exit code 1.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Numerical failures. The CLI maps these to exit code 2.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An exponent in the mean function exceeded the guard value.
class Overflow : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Proximal weight does not dominate the penalty's weak-convexity constant.
class NonConvexProx : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularHessian : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IllConditioned : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class AllFitsFailed : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class CholeskyFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InsufficientReplicates : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

}  // namespace mepois
