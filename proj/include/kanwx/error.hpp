#pragma once

#include <stdexcept>
#include <string>

namespace kanwx {

// Error taxonomy used across the library. Everything derives from Error so
// callers can catch broadly or per category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape/axis mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input file does not match the expected schema (header, columns).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Input file has a well-formed schema but bad content (rows, dates, values).
class DataError : public Error {
 public:
  using Error::Error;
};

// A feature column with max == min cannot be min-max scaled.
class DegenerateFeatureError : public DataError {
 public:
  using DataError::DataError;
};

// Invalid benchmark or model configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training diverged or could not proceed.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace kanwx
