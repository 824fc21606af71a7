#ifndef IDSBD_ERROR_H_
#define IDSBD_ERROR_H_

#include <stdexcept>
#include <string>

namespace idsbd {

// Base of every error raised by the library. The CLI maps ValidationError
// subclasses to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: configuration, malformed files, shape mismatches.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SplitError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace idsbd

#endif  // IDSBD_ERROR_H_
