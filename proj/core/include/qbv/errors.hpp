#pragma once

#include <stdexcept>
#include <string>

namespace qbv {

/// Base class for runtime failures raised by the library. Precondition
/// violations on arguments use std::invalid_argument / std::out_of_range.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Audio could not be read or decoded (bad RIFF, unsupported codec, empty).
class AudioDecodeError : public Error {
 public:
  using Error::Error;
};

/// A QBVE container or manifest is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A feature or embedding has zero norm, so cosine similarity is undefined.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values appeared during a forward pass or in the loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace qbv
