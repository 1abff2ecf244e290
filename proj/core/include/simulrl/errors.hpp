#pragma once

#include <stdexcept>
#include <string>

namespace simulrl {

// Exception hierarchy. The CLI maps each family onto a process exit code:
// ConfigError -> 1 (usage), DataError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Raised when a training pair cannot be built (sentence-count mismatch,
// target overflow past the frame budget).
class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace simulrl
