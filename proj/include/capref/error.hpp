#pragma once

#include <stdexcept>
#include <string>

namespace capref {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch, out-of-range value, malformed model.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A file could not be parsed. The message carries line/field context.
class ParseError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersion : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss, gradient or residual.
class NumericFailure : public Error {
 public:
  using Error::Error;
};

class BehindCamera : public Error {
 public:
  using Error::Error;
};

class EmptySilhouette : public Error {
 public:
  using Error::Error;
};

class SequenceTooShort : public Error {
 public:
  using Error::Error;
};

/// No frame of the sequence has a single keypoint above the confidence gate.
class Unfittable : public Error {
 public:
  using Error::Error;
};

}  // namespace capref
