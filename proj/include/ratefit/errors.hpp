#pragma once

#include <stdexcept>
#include <string>

namespace ratefit {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A precondition or argument contract was violated by the caller.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Parameters are outside the validity region of a closed-form model
/// (e.g. transmon formula past the dispersive regime, triplet approximation
/// below the resolved-sideband threshold).
class ValidityError : public Error {
public:
    using Error::Error;
};

/// A denominator or matrix became singular at a specific evaluation point.
class SingularityError : public Error {
public:
    using Error::Error;
};

/// Adaptive integration could not continue; carries the last time that was
/// reached with the requested tolerance.
class IntegrationError : public Error {
public:
    IntegrationError(const std::string& msg, double last_good_time)
        : Error(msg), last_good_time_(last_good_time) {}
    double last_good_time() const { return last_good_time_; }

private:
    double last_good_time_;
};

/// Base class for estimator failures.
class FitError : public Error {
public:
    using Error::Error;
};

/// The Jacobian is rank deficient; the message names the unidentifiable
/// parameter directions.
class RankDeficiencyError : public FitError {
public:
    using FitError::FitError;
};

/// Circle fit received data with no usable curvature.
class DegenerateGeometryError : public FitError {
public:
    using FitError::FitError;
};

/// Phase unwrapping is ambiguous at the trace sample spacing.
class AliasingError : public FitError {
public:
    using FitError::FitError;
};

/// Single-point rate extraction outside the saturated regime.
class SaturationError : public FitError {
public:
    using FitError::FitError;
};

/// Histogram fit on degenerate (all-equal) samples.
class ZeroSigmaError : public FitError {
public:
    using FitError::FitError;
};

/// Config/CSV schema violation; the message carries the offending field path
/// or column name.
class SchemaError : public Error {
public:
    using Error::Error;
};

}  // namespace ratefit
