// Error types shared by the secest library.
#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace secest {

/// Malformed input: bad dimensions, out-of-range parameters, unparsable files.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Base for failures of a numerical routine on otherwise valid input.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// H restricted to a subset does not have full column rank.
class SingularFitError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// The model violates 2q-observability where an operation requires it.
class ObservabilityError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// A confidence region with no pieces was passed where a nonempty one is needed.
class EmptyRegionError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// An ellipsoid shape matrix that is not symmetric positive definite.
class ShapeError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// An iterative solver hit its iteration cap. Carries the best iterate found.
class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, Eigen::VectorXd best, double best_value)
        : NumericalError(what), best_iterate(std::move(best)), best_value(best_value) {}

    Eigen::VectorXd best_iterate;
    double best_value;
};

}  // namespace secest
