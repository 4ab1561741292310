#pragma once

#include <stdexcept>
#include <string>

namespace mtlink {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad user input: malformed files, out-of-range values, inconsistent config.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Tensor shape disagreement.
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// An operation was called outside its contract (non-scalar loss, repeated
/// backward, index out of range, empty batch).
class ContractError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A softmax/pool row has no valid position to normalize over.
class DegenerateRowError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Token id outside the embedding vocabulary.
class VocabularyError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Not enough distinct candidates to satisfy a sampling request.
class ExhaustionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Requested data (e.g. raw coordinates) is not present.
class UnavailableError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Filesystem / serialization failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtlink
