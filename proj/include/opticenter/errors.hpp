#pragma once

#include <stdexcept>
#include <string>

namespace opticenter {

/// Base class for all computation errors raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a direction vector is too short to normalize.
struct DegenerateDirection : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

/// Normal matrix of the closed-form solve is numerically singular
/// (all observed lines near-parallel).
struct SingularNormalMatrix : Error {
  using Error::Error;
};

/// The TLS right singular vector has a vanishing last component; no
/// classical TLS solution exists.
struct NongenericTLS : Error {
  using Error::Error;
};

struct RankDeficient : Error {
  using Error::Error;
};

struct StepSizeNotPositive : Error {
  using Error::Error;
};

/// Iterative solver produced NaN/Inf; reported instead of looping.
struct NonFiniteIterate : Error {
  using Error::Error;
};

struct InsufficientReplicates : Error {
  using Error::Error;
};

struct BeadOutOfBounds : Error {
  using Error::Error;
};

/// Component too small or too flat to admit a PCA axis.
struct DegenerateComponent : Error {
  using Error::Error;
};

/// Malformed input file (CSV row, stack sidecar, ...). Message names the
/// offending location.
struct ParseError : Error {
  using Error::Error;
};

/// Bad command-line usage (unknown loss string, invalid flag combination).
/// Mapped to exit code 1 by the CLI, unlike computation errors (exit 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace opticenter
