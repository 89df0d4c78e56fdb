#pragma once

#include <stdexcept>
#include <string>

namespace gaitcnn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of two operands do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input violates a documented precondition or invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Object used in the wrong lifecycle state (e.g. predicting without a scaler).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Gait events could not be located in a stride signal.
class DetectionError : public Error {
 public:
  using Error::Error;
};

/// Training produced non-finite values.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or stream failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A persisted file is truncated, has the wrong version, or fails its checksum.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace gaitcnn
