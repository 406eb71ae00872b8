#pragma once

#include <stdexcept>
#include <string>

namespace specklenet {

// Every failure raised by the library derives from Error, so callers that
// only care about "did it work" can catch one type. The subclasses map onto
// the error kinds the CLI turns into exit codes and messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// Input is well-formed but carries no usable signal (zero variance, all-zero).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class CheckpointIncompatibleError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace specklenet
