#pragma once

#include <stdexcept>
#include <string>

namespace fxai {

// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// Eye centroids coincide or all landmark points collapse to one location.
class DegenerateLandmarks : public Error {
 public:
  using Error::Error;
};

// Weighted normal equations could not be solved (rank deficient design at zero ridge).
class SingularSystem : public Error {
 public:
  using Error::Error;
};

// A selection policy matched no records.
class EmptySelection : public Error {
 public:
  using Error::Error;
};

// Classifier gateway failures, one type per failure class.
class BackendError : public Error {
 public:
  using Error::Error;
};

class BackendDied : public BackendError {
 public:
  using BackendError::BackendError;
};

class ProtocolError : public BackendError {
 public:
  using BackendError::BackendError;
};

class SizeMismatch : public BackendError {
 public:
  using BackendError::BackendError;
};

// The backend answered with an {"type":"error"} object.
class BackendReportedError : public BackendError {
 public:
  using BackendError::BackendError;
};

}  // namespace fxai
