// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <type_traits>

#include "dfcap/channel_model.hpp"
#include "dfcap/core.hpp"

namespace dfc {

/// Gaussian posterior N(m, K) of the channel state given s_0 and y_1..y_t.
template <typename Scalar = double>
struct PosteriorState {
    Vector<Scalar> m;
    Matrix<Scalar> K;

    static PosteriorState zero(Eigen::Index M) {
        return {Vector<Scalar>::Zero(M), Matrix<Scalar>::Zero(M, M)};
    }
};

/// Stationary source x_t = d'(s_{t-1} - m_{t-1}) + e z_t.
///
/// The offset g_t = -d' m_{t-1} (the center-of-gravity rule) is never stored;
/// every consumer derives it from the posterior mean, so the source sees the
/// feedback only through (m, K).
template <typename Scalar = double>
struct SourcePolicy {
    Vector<Scalar> d;
    Scalar e = Scalar(0);

    static SourcePolicy open_loop(Eigen::Index M, Scalar e) { return {Vector<Scalar>::Zero(M), e}; }

    Scalar offset(const PosteriorState<Scalar>& post) const { return -d.dot(post.m); }
};

/// Closed-loop transition matrix Q = A + b d'.
template <typename Scalar>
Matrix<Scalar> closed_loop(const StateSpaceChannel<Scalar>& ch, const SourcePolicy<Scalar>& policy) {
    return ch.A + ch.b * policy.d.transpose();
}

template <typename Scalar>
PosteriorState<Scalar> kalman_step(const StateSpaceChannel<Scalar>& ch,
                                   const SourcePolicy<Scalar>& policy,
                                   const PosteriorState<Scalar>& post, std::type_identity_t<Scalar> y) {
    const Matrix<Scalar> Q = closed_loop(ch, policy);
    const Vector<Scalar> Kc = post.K * ch.c;
    const Scalar v = ch.c.dot(Kc) + ch.sigma_w2;
    if (!(v > 0)) throw NumericalDegeneracy("kalman_step: innovation variance c'Kc + sigma_w2 <= 0");

    const Vector<Scalar> QKc = Q * Kc;
    const Scalar innovation = y - ch.c.dot(post.m);

    // E[S_t | y^{t-1}] = Q m + b g = A m under the center-of-gravity offset.
    PosteriorState<Scalar> next;
    next.m = ch.A * post.m + QKc * (innovation / v);
    Matrix<Scalar> K = Q * post.K * Q.transpose() + (policy.e * policy.e) * ch.b * ch.b.transpose() -
                       QKc * QKc.transpose() / v;
    next.K = (K + K.transpose()) / Scalar(2);
    return next;
}

/// One application of the covariance recursion,
/// K -> Q K Q' + e^2 b b' - (Q K c)(Q K c)' / (c'Kc + sigma_w2), symmetrized.
template <typename Scalar>
Matrix<Scalar> riccati_map(const StateSpaceChannel<Scalar>& ch, const SourcePolicy<Scalar>& policy,
                           const std::type_identity_t<Matrix<Scalar>>& K) {
    const Matrix<Scalar> Q = closed_loop(ch, policy);
    const Vector<Scalar> QKc = Q * (K * ch.c);
    const Scalar v = ch.c.dot(K * ch.c) + ch.sigma_w2;
    Matrix<Scalar> R = Q * K * Q.transpose() + (policy.e * policy.e) * ch.b * ch.b.transpose() -
                       QKc * QKc.transpose() / v;
    return (R + R.transpose()) / Scalar(2);
}

struct RiccatiOptions {
    double relative_tolerance = 1e-12;
    int max_doublings = 64;  // 2^64 fixed-point steps
    int max_polish_steps = 1000;
    double divergence_bound = 1e12;
};

template <typename Scalar = double>
struct RiccatiSolution {
    Matrix<Scalar> K;
    int doublings = 0;
};

/// Limit of the fixed-point iteration K <- riccati_map(K) started at 0, which
/// is the minimal PSD solution. Computed with the structure-preserving
/// doubling algorithm: after k steps H equals the 2^k-th fixed-point iterate,
/// so near-marginal closed loops (contraction 1 - O(e)) still settle in a few
/// dozen steps. Returns nullopt when the iterates blow up.
template <typename Scalar>
std::optional<RiccatiSolution<Scalar>> try_solve_riccati(const StateSpaceChannel<Scalar>& ch,
                                                         const SourcePolicy<Scalar>& policy,
                                                         const RiccatiOptions& opts = {}) {
    const Eigen::Index M = ch.dim();
    const Matrix<Scalar> I = Matrix<Scalar>::Identity(M, M);
    // Filter form mapped onto the control-form recursion X <- A'X(I + GX)^{-1}A + H.
    Matrix<Scalar> A = closed_loop(ch, policy).transpose();
    Matrix<Scalar> G = ch.c * ch.c.transpose() / ch.sigma_w2;
    Matrix<Scalar> H = (policy.e * policy.e) * ch.b * ch.b.transpose();
    for (int k = 1; k <= opts.max_doublings; ++k) {
        const Eigen::PartialPivLU<Matrix<Scalar>> lu(I + G * H);
        const Matrix<Scalar> AW = A * lu.solve(I);  // A (I + GH)^{-1}
        Matrix<Scalar> H_next = H + A.transpose() * H * lu.solve(A);
        Matrix<Scalar> G_next = G + AW * G * A.transpose();
        A = AW * A;
        H_next = (H_next + H_next.transpose()) / Scalar(2);
        G = (G_next + G_next.transpose()) / Scalar(2);

        // Purely relative test: with unstable Q and small e the iterates grow
        // geometrically from ~e^2, and an absolute floor would stop them early.
        const Scalar size = std::max(max_abs(H), max_abs(H_next));
        const Scalar step = max_abs(H_next - H);
        H = std::move(H_next);
        if (!std::isfinite(static_cast<double>(step)) || size > Scalar(opts.divergence_bound))
            return std::nullopt;
        if (step <= Scalar(opts.relative_tolerance) * size) {
            // With unstable Q the doubling matrix grows like Q^(2^k) and costs
            // digits; a few plain fixed-point steps restore them.
            for (int it = 0; it < opts.max_polish_steps; ++it) {
                Matrix<Scalar> next = riccati_map(ch, policy, H);
                const Scalar d = max_abs(next - H);
                H = std::move(next);
                if (d <= Scalar(opts.relative_tolerance) * max_abs(H)) break;
            }
            return RiccatiSolution<Scalar>{H, k};
        }
    }
    return std::nullopt;
}

/// Minimal PSD solution of the algebraic Riccati equation for a stationary policy.
/// Throws Divergence when the iteration does not settle.
template <typename Scalar>
RiccatiSolution<Scalar> solve_riccati(const StateSpaceChannel<Scalar>& ch, const SourcePolicy<Scalar>& policy,
                                      const RiccatiOptions& opts = {}) {
    auto sol = try_solve_riccati(ch, policy, opts);
    if (!sol)
        throw Divergence("solve_riccati: fixed-point iteration of the algebraic Riccati equation diverged "
                         "(closed loop A + b d' is not detectable through c)");
    return *std::move(sol);
}

template <typename Scalar>
Scalar riccati_residual(const StateSpaceChannel<Scalar>& ch, const SourcePolicy<Scalar>& policy,
                        const std::type_identity_t<Matrix<Scalar>>& K) {
    return max_abs(K - riccati_map(ch, policy, K));
}

template <typename Scalar = double>
struct InnovationStats {
    Scalar innovation_variance;
    Scalar rate_increment;  // nats
};

template <typename Scalar>
InnovationStats<Scalar> innovation_stats(const StateSpaceChannel<Scalar>& ch, const std::type_identity_t<Matrix<Scalar>>& K) {
    const Scalar signal = ch.c.dot(K * ch.c);
    return {signal + ch.sigma_w2, Scalar(0.5) * std::log1p(signal / ch.sigma_w2)};
}

/// d'Kd + e^2; the mean term vanishes under the center-of-gravity offset.
template <typename Scalar>
Scalar stationary_power(const SourcePolicy<Scalar>& policy, const std::type_identity_t<Matrix<Scalar>>& K) {
    return policy.d.dot(K * policy.d) + policy.e * policy.e;
}

}  // namespace dfc
