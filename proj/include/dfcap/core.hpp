// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dfc {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A noise polynomial has a root on or outside the unit circle.
class NonMinimumPhase : public Error {
public:
    NonMinimumPhase(std::string polynomial, double modulus)
        : Error("validate_arma_spec: " + polynomial + " polynomial has a root of modulus " +
                std::to_string(modulus) + " (must be < 1)"),
          polynomial_(std::move(polynomial)), modulus_(modulus) {}

    const std::string& polynomial() const noexcept { return polynomial_; }
    double modulus() const noexcept { return modulus_; }

private:
    std::string polynomial_;
    double modulus_;
};

/// sigma_w2, nu or power out of range.
class InvalidScalar : public Error {
public:
    InvalidScalar(std::string field, const std::string& what)
        : Error("validate_arma_spec: " + field + " " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// The fixed-point iteration of the Riccati map blew up or never settled.
class Divergence : public Error {
public:
    using Error::Error;
};

/// No innovation gain meets the power constraint for the requested feedback gains.
class Infeasible : public Error {
public:
    using Error::Error;
};

/// Innovation variance is not positive; the covariance is corrupted.
class NumericalDegeneracy : public Error {
public:
    using Error::Error;
};

class QuadratureFailure : public Error {
public:
    using Error::Error;
};

class SingularConditioning : public Error {
public:
    using Error::Error;
};

template <typename Derived>
typename Derived::Scalar max_abs(const Eigen::MatrixBase<Derived>& m) {
    using Scalar = typename Derived::Scalar;
    return m.size() == 0 ? Scalar(0) : m.cwiseAbs().maxCoeff();
}

}  // namespace dfc
