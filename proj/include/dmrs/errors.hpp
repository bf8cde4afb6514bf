#pragma once

#include <stdexcept>
#include <string>

namespace dmrs {

/// Base for every error raised by the library. The CLI maps subclasses onto
/// exit codes (configuration/validation -> 1, I/O/format/integrity -> 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or hyperparameters that cannot describe a valid computation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a documented precondition (labels, lengths, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A value does not fit the requested storage type.
class RangeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Recorded state no longer matches what it was recorded from (mutated
/// tape inputs, truncated checkpoint payloads).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File contents do not follow the expected encoding.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dmrs
