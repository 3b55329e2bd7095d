#pragma once

#include <stdexcept>
#include <string>

namespace semilin {

/// Base class for all domain errors thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid coefficient data (e.g. a non-positive sigma sample).
struct CoefficientError : Error {
    using Error::Error;
};

/// A field representation that does not support the requested notion
/// (e.g. raw point samples without an interpolation rule asked for a derivative).
struct UnsupportedRepresentation : Error {
    using Error::Error;
};

/// exp(-Sigma) or exp(Sigma) overflowed during scale construction.
struct ScaleOverflow : Error {
    ScaleOverflow(const std::string& msg, double x) : Error(msg), offending_x(x) {}
    double offending_x;
};

/// Argument outside the tabulated / admissible range.
struct OutOfRange : Error {
    using Error::Error;
};

/// Anchor point is not a node of the requested grid.
struct BadAnchor : Error {
    using Error::Error;
};

/// Fixed-point iteration did not converge within the iteration budget.
struct NoConvergence : Error {
    NoConvergence(const std::string& msg, double residual, int iterations)
        : Error(msg), last_residual(residual), iterations(iterations) {}
    double last_residual;
    int iterations;
};

/// The weighted-norm parameter needed for contraction would underflow the weights.
struct IllConditioned : Error {
    using Error::Error;
};

/// Picard BVP precondition failed: estimated Lipschitz constant exceeds the
/// kernel-bound threshold.
struct ContractionNotGuaranteed : Error {
    ContractionNotGuaranteed(const std::string& msg, double k, double threshold)
        : Error(msg), lipschitz(k), threshold(threshold) {}
    double lipschitz;
    double threshold;
};

/// Ensemble state outside the PDE domain before the flagged exit.
struct InconsistentEnsemble : Error {
    using Error::Error;
};

/// Requested checkpoint lies beyond the simulation horizon.
struct OutOfHorizon : Error {
    using Error::Error;
};

/// Operation requested on a field it does not apply to.
struct Unsupported : Error {
    using Error::Error;
};

/// Malformed configuration input.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace semilin
