#pragma once

#include <stdexcept>
#include <string>

namespace hjlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid grid, problem or experiment configuration.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// A structural hypothesis on (H, A) or on the coupling matrix failed.
class HypothesisViolation : public Error {
public:
    HypothesisViolation(std::string hypothesis, const std::string& what)
        : Error(what), hypothesis_(std::move(hypothesis)) {}

    const std::string& hypothesis() const noexcept { return hypothesis_; }

private:
    std::string hypothesis_;
};

/// The explicit part of a time integrator blew up.
class StabilityError : public Error {
public:
    StabilityError(std::size_t step, const std::string& what) : Error(what), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Linear solver failure (singular matrix, CG breakdown, iteration cap).
class LinearSolverError : public Error {
public:
    using Error::Error;
};

/// An iterative procedure did not reach its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(double last_value, const std::string& what) : Error(what), last_value_(last_value) {}

    double last_value() const noexcept { return last_value_; }

private:
    double last_value_;
};

/// Mass or positivity of an adjoint density drifted beyond tolerance.
/// Always signals a scheme or transpose bug rather than bad input.
class ConservationError : public Error {
public:
    using Error::Error;
};

}  // namespace hjlab
