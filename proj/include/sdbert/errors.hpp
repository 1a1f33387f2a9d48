#ifndef SDBERT_ERRORS_HPP_
#define SDBERT_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace sdbert {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/extent mismatch or misuse of an operation contract.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid configuration value (g > n, alpha outside [0,1], unknown config key, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Missing/empty/unreadable data.
struct DataError : Error {
  using Error::Error;
};

// Malformed input file content; message names the offending line.
struct ParseError : DataError {
  using DataError::DataError;
};

// Non-finite values, overflow, degenerate softmax rows.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace sdbert

#endif  // SDBERT_ERRORS_HPP_
