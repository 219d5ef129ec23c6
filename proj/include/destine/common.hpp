#pragma once

#include <stdexcept>
#include <string>

namespace destine {

// CLI exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitNumeric = 3,
  kExitIo = 4,
};

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return kExitConfig; }
};

// Shape or rank mismatch between tensors / layers.
struct DimensionError : Error {
  using Error::Error;
};

// Bad configuration value, unknown key, infeasible request.
struct ConfigError : Error {
  using Error::Error;
};

// Scenario generation cannot satisfy the request (capacity, layout).
struct GenerationError : Error {
  using Error::Error;
};

// Attention mask with a fully blocked row.
struct DegenerateMaskError : Error {
  using Error::Error;
};

// More agents than the fixed padding capacity.
struct CapacityError : Error {
  using Error::Error;
};

// Argument outside its documented range.
struct RangeError : Error {
  using Error::Error;
};

// NaN/Inf produced by a numeric operation.
struct NumericError : Error {
  using Error::Error;
  int exit_code() const override { return kExitNumeric; }
};

// Filesystem / serialization failure.
struct IoError : Error {
  using Error::Error;
  int exit_code() const override { return kExitIo; }
};

// Malformed input file (scene JSON, checkpoint, matrix spec).
struct ParseError : IoError {
  using IoError::IoError;
};

}  // namespace destine
