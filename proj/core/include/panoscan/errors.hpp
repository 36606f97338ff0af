#pragma once

#include <stdexcept>
#include <string>

namespace panoscan {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point lies outside the valid domain of the gnomonic projection.
class HorizonError : public Error {
 public:
  using Error::Error;
};

/// Tensor, batch or sequence dimensions disagree with what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A correlation was requested on a constant series.
class DegenerateSeries : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class EmptyVideo : public Error {
 public:
  using Error::Error;
};

class EmptyPath : public Error {
 public:
  using Error::Error;
};

// On-disk format errors.
class FormatError : public Error {
 public:
  using Error::Error;
};

class MagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class HeaderError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncationError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace panoscan
