#ifndef HNETPP_ERRORS_HPP
#define HNETPP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace hnetpp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes passed to a primitive.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Bad or unknown configuration values. Maps to CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data: corpora, gold files, checkpoints. Exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite loss or gradient. Exit code 3.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace hnetpp

#endif  // HNETPP_ERRORS_HPP
