#pragma once

#include <stdexcept>
#include <string>

namespace l1mpc {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A matrix has a shape inconsistent with the system dimensions.
/// The message names the offending matrix.
struct DimensionMismatch : Error {
    using Error::Error;
};

/// A computation produced NaN or infinity.
struct NonFinite : Error {
    using Error::Error;
};

/// A matrix required to be positive semidefinite is not.
struct NotPsd : Error {
    using Error::Error;
};

/// A factorization failed (non-PD block or severe ill-conditioning).
struct NumericalFailure : Error {
    using Error::Error;
};

/// The stabilizing-gain iteration did not converge.
struct NotStabilizable : Error {
    using Error::Error;
};

/// The filter Riccati iteration did not converge.
struct NotDetectable : Error {
    using Error::Error;
};

/// A dense linear solve hit a (numerically) singular matrix.
struct Singular : Error {
    using Error::Error;
};

/// An optimizer exhausted its iteration budget before reaching tolerance.
struct MaxIterExceeded : Error {
    using Error::Error;
};

/// Scenario configuration errors (cli module).
struct ConfigError : Error {
    using Error::Error;
};

/// Malformed config text (bad JSON).
struct ParseError : ConfigError {
    using ConfigError::ConfigError;
};

/// Structurally valid config with a bad or missing field; names the field.
struct ValidationError : ConfigError {
    using ConfigError::ConfigError;
};

}  // namespace l1mpc
