#ifndef MVSIS_ERRORS_HPP
#define MVSIS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mvsis {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes of states, matrices or vectors disagree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An operation was called outside the hypotheses it needs
/// (non-Metzler input, reducible matrix, state outside the simplex, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// An iterative solver ran out of iterations.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// The integrator produced non-finite values.
class IntegrationBlowup : public Error {
public:
    IntegrationBlowup(double t, double dt)
        : Error("integration blow-up: non-finite state at t=" + std::to_string(t) +
                " with dt=" + std::to_string(dt)),
          t_(t), dt_(dt) {}

    double time() const noexcept { return t_; }
    double step() const noexcept { return dt_; }

private:
    double t_;
    double dt_;
};

/// Scenario files that do not parse or do not validate.
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace mvsis

#endif  // MVSIS_ERRORS_HPP
