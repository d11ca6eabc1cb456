#pragma once

#include <stdexcept>
#include <string>

namespace vsl {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user input: invalid config values, out-of-range ids, inconsistent specs.
struct ValidationError : Error {
  using Error::Error;
};

// Tensor or parameter shapes do not agree.
struct ShapeError : ValidationError {
  using ValidationError::ValidationError;
};

// A sampler ran out of admissible draws (e.g. every analogy type is held out).
struct ExhaustionError : ValidationError {
  using ValidationError::ValidationError;
};

// File-level failures.
struct IoError : Error {
  using Error::Error;
};

// Wrong magic bytes.
struct FormatError : IoError {
  using IoError::IoError;
};

// Unsupported file version.
struct VersionError : IoError {
  using IoError::IoError;
};

// File ends before the declared payload.
struct TruncationError : IoError {
  using IoError::IoError;
};

// Numerical failures: non-finite loss, divergent training.
struct NumericalError : Error {
  using Error::Error;
};

// A pair of features whose difference is too small to normalize (strict mode).
struct DegeneratePair : NumericalError {
  using NumericalError::NumericalError;
};

// Process exit codes used by the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitIo = 2,
  kExitNumerical = 3,
};

}  // namespace vsl
