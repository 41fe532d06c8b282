#pragma once

#include <stdexcept>
#include <string>

namespace sparse_ips {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A size cap (vertex count, event count, isomorphism size) was exceeded.
class SizeCapExceeded : public Error {
 public:
  using Error::Error;
};

/// A jump rate exceeded the model's declared envelope.
class EnvelopeViolation : public Error {
 public:
  using Error::Error;
};

/// A declared drift bound was violated or a non-finite value appeared.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An ODE step left the probability simplex by more than the tolerance.
class StepSizeError : public Error {
 public:
  using Error::Error;
};

}  // namespace sparse_ips
