#pragma once

#include <stdexcept>
#include <string>

namespace daug {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or axis sizes do not fit an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value (loss term, gradient, config field) violates a numeric precondition.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Unknown domain name or head id, duplicate registration.
class RegistryError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint container errors.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class VersionError : public IoError {
 public:
  using IoError::IoError;
};

class TruncatedError : public IoError {
 public:
  using IoError::IoError;
};

class UnknownTensorError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace daug
