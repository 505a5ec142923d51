#pragma once

#include <stdexcept>
#include <string>

namespace freeway {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a function (e.g. density outside [0, a]).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Requested flow exceeds what the increasing demand branch can deliver.
class InfeasibleFlowError : public Error {
public:
    using Error::Error;
};

/// A demand function or model violates assumption (H) or a structural invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// No uncongested equilibrium exists for the requested inflows.
class NoEquilibriumError : public Error {
public:
    NoEquilibriumError(std::size_t cell, const std::string& what)
        : Error(what), cell_(cell) {}
    /// 1-based cell that violated the existence conditions.
    [[nodiscard]] std::size_t cell() const noexcept { return cell_; }

private:
    std::size_t cell_;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

/// The control set (and floors) cannot satisfy the drainage inequalities.
class InfeasibleControlSetError : public Error {
public:
    InfeasibleControlSetError(const std::string& what, double flow_residual, double drainage_residual)
        : Error(what), flow_residual_(flow_residual), drainage_residual_(drainage_residual) {}
    /// Uncontrolled load minus the equilibrium flow floor (must be negative).
    [[nodiscard]] double flow_residual() const noexcept { return flow_residual_; }
    /// Uncontrolled load minus C times the free-flow box mass (must be negative).
    [[nodiscard]] double drainage_residual() const noexcept { return drainage_residual_; }

private:
    double flow_residual_;
    double drainage_residual_;
};

class SynthesisError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent scenario / certificate file.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace freeway
