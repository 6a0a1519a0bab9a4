#pragma once

#include <stdexcept>
#include <string>

namespace cglmm {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mean value outside the family's mean domain.
struct MeanDomainError : Error {
    using Error::Error;
};

// Canonical parameter outside the family's canonical domain.
struct CanonicalDomainError : Error {
    using Error::Error;
};

// Response value outside the family's support.
struct SupportError : Error {
    using Error::Error;
};

// Hyperparameters violate the prior's integrability constraints.
struct PriorParameterError : Error {
    using Error::Error;
};

// Prior mean requested where it does not exist (inverse-gamma with C <= 1).
struct MeanUndefinedError : PriorParameterError {
    using PriorParameterError::PriorParameterError;
};

// Posterior update left the integrable region.
struct DegeneratePosteriorError : Error {
    using Error::Error;
};

// Binomial has no non-trivial simultaneous-conjugacy solution set, so
// unit-level covariates cannot be incorporated in closed form.
struct UnitCovariateError : Error {
    using Error::Error;
};

// Dataset or model-specification validation failure.
struct DataError : Error {
    using Error::Error;
};

// Configuration / CLI argument failure.
struct ConfigError : Error {
    using Error::Error;
};

// File system failure.
struct IoError : Error {
    using Error::Error;
};

// Optimizer exhausted its iteration budget.
struct ConvergenceError : Error {
    using Error::Error;
};

}  // namespace cglmm
