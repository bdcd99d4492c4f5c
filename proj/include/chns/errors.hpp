#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace chns {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid or empty geometry (mask, face, mesh lookup).
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Boundary specification selects faces that do not exist on the boundary.
class SpecError : public Error {
public:
    using Error::Error;
};

/// Config file is malformed, has unknown keys, or violates an invariant.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Density field became nonpositive at a quadrature point (limiter failure upstream).
class DensityError : public Error {
public:
    using Error::Error;
};

/// Variable-coefficient pressure operator lost coercivity (nonpositive density).
class CoercivityError : public Error {
public:
    using Error::Error;
};

/// Preconditioner cannot be formed (zero diagonal entry).
class PrecondError : public Error {
public:
    using Error::Error;
};

/// Iterative solver breakdown or iteration budget exhausted.
class SolveError : public Error {
public:
    SolveError(const std::string& msg, std::vector<double> residuals)
        : Error(msg), residual_history(std::move(residuals)) {}
    std::vector<double> residual_history;
};

/// Newton iteration failed to converge.
class NewtonError : public Error {
public:
    NewtonError(const std::string& msg, std::vector<double> norms)
        : Error(msg), residual_norms(std::move(norms)) {}
    std::vector<double> residual_norms;
};

/// A time step could not be completed; carries the failing step index.
class StepError : public Error {
public:
    StepError(const std::string& msg, int step) : Error(msg), step_index(step) {}
    int step_index = -1;
};

/// Flux limiter input violates its inductive precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Flux limiter failed to terminate within the iteration cap (defect detector).
class LimiterError : public Error {
public:
    using Error::Error;
};

/// File reading/writing failure.
class IOError : public Error {
public:
    using Error::Error;
};

} // namespace chns
