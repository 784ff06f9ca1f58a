// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "dfcap/core.hpp"

namespace dfc {

/// User-facing description of an additive ARMA noise channel with delayed feedback.
///
/// The noise spectrum is
///   S_N(w) = sigma_w2 |1 - sum_m a_m e^{-jmw}|^2 / |1 + sum_k c_k e^{-jkw}|^2,
/// so `a` holds the MA (numerator) taps and `c_ar` the AR (denominator) taps,
/// both with the signs shown above.
template <typename Scalar = double>
struct ArmaNoiseSpec {
    std::vector<Scalar> a;
    std::vector<Scalar> c_ar;
    Scalar sigma_w2 = Scalar(1);
    int nu = 1;
    Scalar power = Scalar(1);
    std::string label;
};

/// Companion-form realization of the delayed ISI channel
///   s_t = A s_{t-1} + b x_t,   y_t = c' s_{t-1} + w_t.
template <typename Scalar = double>
struct StateSpaceChannel {
    Matrix<Scalar> A;
    Vector<Scalar> b;
    Vector<Scalar> c;
    Scalar sigma_w2 = Scalar(1);

    Eigen::Index dim() const { return b.size(); }
};

template <typename Scalar>
struct PaddedOrders {
    std::vector<Scalar> a;
    std::vector<Scalar> c_ar;
    int M = 0;
};

/// Companion matrix whose characteristic polynomial is z^n - top(0) z^{n-1} - ... - top(n-1).
template <typename Scalar>
Matrix<Scalar> companion(const std::vector<Scalar>& top) {
    const auto n = static_cast<Eigen::Index>(top.size());
    Matrix<Scalar> C = Matrix<Scalar>::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) C(0, j) = top[static_cast<std::size_t>(j)];
    if (n > 1) C.diagonal(-1).setOnes();
    return C;
}

/// Roots of 1 - sum_m taps[m-1] z^{-m}, i.e. the eigenvalues of companion(taps).
template <typename Scalar>
std::vector<std::complex<Scalar>> polynomial_roots(const std::vector<Scalar>& taps) {
    std::vector<std::complex<Scalar>> roots;
    if (taps.empty()) return roots;
    Eigen::EigenSolver<Matrix<Scalar>> es(companion(taps), false);
    const auto& ev = es.eigenvalues();
    roots.assign(ev.data(), ev.data() + ev.size());
    return roots;
}

template <typename Scalar>
Scalar max_root_modulus(const std::vector<Scalar>& taps) {
    Scalar r(0);
    for (const auto& z : polynomial_roots(taps)) r = std::max(r, std::abs(z));
    return r;
}

/// Modulus at or beyond which a root is treated as non-minimum-phase.
inline constexpr double kRootModulusLimit = 1.0 - 1e-9;

template <typename Scalar>
ArmaNoiseSpec<Scalar> validate_arma_spec(const ArmaNoiseSpec<Scalar>& spec) {
    using std::isfinite;
    if (!(spec.sigma_w2 > 0) || !isfinite(spec.sigma_w2))
        throw InvalidScalar("sigma_w2", "must be a finite value > 0");
    if (spec.nu < 1) throw InvalidScalar("nu", "must be an integer >= 1");
    if (!(spec.power >= 0) || !isfinite(spec.power))
        throw InvalidScalar("power", "must be a finite value >= 0");
    for (Scalar v : spec.a)
        if (!isfinite(v)) throw InvalidScalar("a", "coefficients must be finite");
    for (Scalar v : spec.c_ar)
        if (!isfinite(v)) throw InvalidScalar("c_ar", "coefficients must be finite");

    // MA polynomial 1 - sum a_m z^-m.
    if (const Scalar r = max_root_modulus(spec.a); r >= Scalar(kRootModulusLimit))
        throw NonMinimumPhase("MA (a)", static_cast<double>(r));

    // AR polynomial 1 + sum c_k z^-k, i.e. taps -c_k in the MA convention.
    std::vector<Scalar> neg_c(spec.c_ar.size());
    std::transform(spec.c_ar.begin(), spec.c_ar.end(), neg_c.begin(), [](Scalar v) { return -v; });
    if (const Scalar r = max_root_modulus(neg_c); r >= Scalar(kRootModulusLimit))
        throw NonMinimumPhase("AR (c_ar)", static_cast<double>(r));
    return spec;
}

/// Zero-pads the taps so that M = max(M_orig, K_orig + nu) and len(c_ar) = M - nu.
template <typename Scalar>
PaddedOrders<Scalar> pad_orders(const ArmaNoiseSpec<Scalar>& spec) {
    const int m_orig = static_cast<int>(spec.a.size());
    const int k_orig = static_cast<int>(spec.c_ar.size());
    PaddedOrders<Scalar> out;
    out.M = std::max(m_orig, k_orig + spec.nu);
    out.a = spec.a;
    out.a.resize(static_cast<std::size_t>(out.M), Scalar(0));
    out.c_ar = spec.c_ar;
    out.c_ar.resize(static_cast<std::size_t>(out.M - spec.nu), Scalar(0));
    return out;
}

template <typename Scalar>
StateSpaceChannel<Scalar> build_state_space(const ArmaNoiseSpec<Scalar>& spec) {
    const auto padded = pad_orders(spec);
    const Eigen::Index M = padded.M;

    StateSpaceChannel<Scalar> ch;
    ch.A = companion(padded.a);
    ch.b = Vector<Scalar>::Unit(M, 0);
    ch.c = Vector<Scalar>::Zero(M);
    ch.c(spec.nu - 1) = Scalar(1);
    for (std::size_t k = 0; k < padded.c_ar.size(); ++k)
        ch.c(spec.nu + static_cast<Eigen::Index>(k)) = padded.c_ar[k];
    ch.sigma_w2 = spec.sigma_w2;
    return ch;
}

namespace detail {

// sum_k taps[k-1] e^{-jkw}
template <typename Scalar>
std::complex<Scalar> tap_sum(const std::vector<Scalar>& taps, Scalar omega) {
    std::complex<Scalar> acc(0);
    for (std::size_t k = 0; k < taps.size(); ++k)
        acc += taps[k] * std::polar(Scalar(1), -Scalar(k + 1) * omega);
    return acc;
}

}  // namespace detail

template <typename Scalar>
Scalar noise_psd(const ArmaNoiseSpec<Scalar>& spec, Scalar omega) {
    const auto ma = Scalar(1) - detail::tap_sum(spec.a, omega);
    const auto ar = Scalar(1) + detail::tap_sum(spec.c_ar, omega);
    return spec.sigma_w2 * std::norm(ma) / std::norm(ar);
}

/// Transfer function from x to y of the derived channel,
/// G(e^{jw}) = e^{-j nu w} (1 + sum c_k e^{-jkw}) / (1 - sum a_m e^{-jmw}).
template <typename Scalar>
std::complex<Scalar> equivalent_channel_response(const ArmaNoiseSpec<Scalar>& spec, Scalar omega) {
    const auto ma = Scalar(1) - detail::tap_sum(spec.a, omega);
    const auto ar = Scalar(1) + detail::tap_sum(spec.c_ar, omega);
    return std::polar(Scalar(1), -Scalar(spec.nu) * omega) * ar / ma;
}

}  // namespace dfc
