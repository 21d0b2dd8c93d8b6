#pragma once

#include <stdexcept>
#include <string>

namespace ffmagic {

/// Caller passed something malformed: bad dimensions, out-of-range index,
/// unsupported parameter combination.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Requested size exceeds a hard capacity limit (e.g. dense oracle qubit count).
struct CapacityError : InputError {
  using InputError::InputError;
};

/// Numerical failure that invalidates the current result.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rank loss / degenerate mode content detected during orthonormalization.
/// Trajectories hitting this are discarded and reported, not patched up.
struct DegeneracyError : NumericalError {
  using NumericalError::NumericalError;
};

/// Conditional probabilities or determinants left their admissible range.
struct InstabilityError : NumericalError {
  using NumericalError::NumericalError;
};

/// Bad experiment configuration (harness level).
struct ConfigError : InputError {
  using InputError::InputError;
};

}  // namespace ffmagic
