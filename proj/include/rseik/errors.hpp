#pragma once

#include <stdexcept>
#include <string>

namespace rseik {

// Usage and domain problems map to CLI exit code 2, numerical ones to 3.
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : DomainError {
    using DomainError::DomainError;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SingularityError : NumericalError {
    using NumericalError::NumericalError;
};

struct StencilError : NumericalError {
    using NumericalError::NumericalError;
};

struct AlgorithmError : NumericalError {
    using NumericalError::NumericalError;
};

struct ConvergenceError : NumericalError {
    ConvergenceError(const std::string& what, double last_residual)
        : NumericalError(what), residual(last_residual) {}
    double residual;
};

struct InstabilityError : NumericalError {
    InstabilityError(const std::string& what, double suggested)
        : NumericalError(what), suggested_dt(suggested) {}
    double suggested_dt;
};

struct StationaryPointError : NumericalError {
    using NumericalError::NumericalError;
};

}  // namespace rseik
