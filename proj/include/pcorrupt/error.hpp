#pragma once

#include <stdexcept>
#include <string>

namespace pcorrupt {

// Base of every error thrown by the library. Callers that only care about
// "something went wrong" catch this; the subclasses name the failure class.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument, violated precondition or malformed spec.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Parameter vector does not fit the model it is evaluated against.
class IncompatibleParamsError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced during evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// No well-defined maximiser: the direction vector is zero on its support.
class DegenerateDirectionError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Requested search mode cannot handle the problem size.
class ModeError : public Error {
 public:
  using Error::Error;
};

class UnsupportedMetricError : public Error {
 public:
  using Error::Error;
};

// Training loss blew past the divergence threshold.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Malformed dataset or checkpoint file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pcorrupt
