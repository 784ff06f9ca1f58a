// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "dfcap/channel_model.hpp"
#include "dfcap/kalman.hpp"
#include "dfcap/random.hpp"

namespace dfc {

// ---------------------------------------------------------------------------
// Closed-loop Monte Carlo
// ---------------------------------------------------------------------------

/// One realization of the derived channel driven by a feedback source.
/// states.col(t) is s_t for t = 0..n, with s_0 = 0.
template <typename Scalar = double>
struct Trajectory {
    std::vector<Scalar> x;
    std::vector<Scalar> y;
    std::vector<Scalar> w;
    Matrix<Scalar> states;
    std::uint64_t seed = 0;

    std::size_t length() const { return x.size(); }
};

template <typename Scalar = double>
struct ClosedLoopStats {
    Scalar input_power;          // mean x_t^2
    Scalar input_mean;           // mean x_t
    Scalar innovation_variance;  // mean (y_t - c'm_{t-1})^2
    Scalar information_density;  // mean of log p(y_t | y^{t-1}) - log p(w_t), nats
};

template <typename Scalar = double>
struct ClosedLoopRun {
    Trajectory<Scalar> trajectory;
    ClosedLoopStats<Scalar> stats;
};

/// Transmitter and channel in closed loop for n steps.
///
/// The transmitter tracks the receiver's posterior with kalman_step on the
/// fed-back outputs and sends x_t = d'(s_{t-1} - m_{t-1}) + e z_t.
template <typename Scalar>
ClosedLoopRun<Scalar> simulate_closed_loop(const StateSpaceChannel<Scalar>& ch, const SourcePolicy<Scalar>& policy,
                                           long n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("simulate_closed_loop: n must be >= 1");
    const Eigen::Index M = ch.dim();
    const auto steps = static_cast<std::size_t>(n);
    const Scalar sigma = std::sqrt(ch.sigma_w2);

    ClosedLoopRun<Scalar> run;
    auto& tr = run.trajectory;
    tr.seed = seed;
    tr.x.resize(steps);
    tr.y.resize(steps);
    tr.w.resize(steps);
    tr.states = Matrix<Scalar>::Zero(M, n + 1);

    SplitMix64 rng(seed);
    auto post = PosteriorState<Scalar>::zero(M);
    Scalar sum_x(0), sum_x2(0), sum_innov2(0), sum_density(0);
    Vector<Scalar> s = Vector<Scalar>::Zero(M);
    for (std::size_t t = 0; t < steps; ++t) {
        const Scalar z = Scalar(rng.normal());
        const Scalar w = sigma * Scalar(rng.normal());
        const Scalar x = policy.d.dot(s - post.m) + policy.e * z;
        const Scalar y = ch.c.dot(s) + w;

        const Scalar v = ch.c.dot(post.K * ch.c) + ch.sigma_w2;
        const Scalar innov = y - ch.c.dot(post.m);
        // -log N(innov; 0, v) + log N(w; 0, sigma_w2)
        sum_density += Scalar(0.5) * (std::log(v) + innov * innov / v) -
                       Scalar(0.5) * (std::log(ch.sigma_w2) + w * w / ch.sigma_w2);

        post = kalman_step(ch, policy, post, y);
        s = ch.A * s + ch.b * x;

        tr.x[t] = x;
        tr.y[t] = y;
        tr.w[t] = w;
        tr.states.col(static_cast<Eigen::Index>(t) + 1) = s;
        sum_x += x;
        sum_x2 += x * x;
        sum_innov2 += innov * innov;
    }
    const Scalar N(n);
    run.stats = {sum_x2 / N, sum_x / N, sum_innov2 / N, sum_density / N};
    return run;
}

// ---------------------------------------------------------------------------
// Original channel versus derived channel
// ---------------------------------------------------------------------------

template <typename Scalar = double>
struct OriginalChannelRun {
    std::vector<Scalar> noise;      // N = H(z) v
    std::vector<Scalar> r;          // R = X + N
    std::vector<Scalar> u;          // U = H^{-1}(z) R
    std::vector<Scalar> y_delayed;  // Y_t = U_{t-nu}
};

/// Filters the original additive-noise channel sample by sample. Every signal
/// is at rest before t = 1.
template <typename Scalar>
OriginalChannelRun<Scalar> simulate_original_channel(const ArmaNoiseSpec<Scalar>& spec, std::span<const Scalar> x,
                                                     std::span<const Scalar> v) {
    if (x.size() != v.size()) throw std::invalid_argument("simulate_original_channel: x and v differ in length");
    const std::size_t n = x.size();
    OriginalChannelRun<Scalar> out;
    out.noise.assign(n, Scalar(0));
    out.r.assign(n, Scalar(0));
    out.u.assign(n, Scalar(0));
    out.y_delayed.assign(n, Scalar(0));

    for (std::size_t t = 0; t < n; ++t) {
        // N_t + sum c_k N_{t-k} = v_t - sum a_m v_{t-m}
        Scalar nt = v[t];
        for (std::size_t m = 1; m <= spec.a.size() && m <= t; ++m) nt -= spec.a[m - 1] * v[t - m];
        for (std::size_t k = 1; k <= spec.c_ar.size() && k <= t; ++k) nt -= spec.c_ar[k - 1] * out.noise[t - k];
        out.noise[t] = nt;
        out.r[t] = x[t] + nt;

        // U_t - sum a_m U_{t-m} = R_t + sum c_k R_{t-k}
        Scalar ut = out.r[t];
        for (std::size_t k = 1; k <= spec.c_ar.size() && k <= t; ++k) ut += spec.c_ar[k - 1] * out.r[t - k];
        for (std::size_t m = 1; m <= spec.a.size() && m <= t; ++m) ut += spec.a[m - 1] * out.u[t - m];
        out.u[t] = ut;
    }
    const auto nu = static_cast<std::size_t>(spec.nu);
    for (std::size_t t = nu; t < n; ++t) out.y_delayed[t] = out.u[t - nu];
    return out;
}

/// Open-loop run of the state-space channel for given inputs and output noise, s_0 = 0.
template <typename Scalar>
std::vector<Scalar> run_state_space(const StateSpaceChannel<Scalar>& ch, std::span<const Scalar> x,
                                    std::span<const Scalar> w) {
    if (x.size() != w.size()) throw std::invalid_argument("run_state_space: x and w differ in length");
    std::vector<Scalar> y(x.size());
    Vector<Scalar> s = Vector<Scalar>::Zero(ch.dim());
    for (std::size_t t = 0; t < x.size(); ++t) {
        y[t] = ch.c.dot(s) + w[t];
        s = ch.A * s + ch.b * x[t];
    }
    return y;
}

// ---------------------------------------------------------------------------
// Exact Gaussian bookkeeping
// ---------------------------------------------------------------------------

template <typename Scalar = double>
struct GaussianJoint {
    Vector<Scalar> mean;
    Matrix<Scalar> cov;
    std::vector<std::string> labels;

    Eigen::Index dim() const { return mean.size(); }
};

/// Random variables written as mean + coef * xi for a shared unit-variance
/// white basis xi; one row per variable.
template <typename Scalar = double>
struct AffineForm {
    Vector<Scalar> mean;
    Matrix<Scalar> coef;

    static AffineForm zero(Eigen::Index rows, Eigen::Index basis) {
        return {Vector<Scalar>::Zero(rows), Matrix<Scalar>::Zero(rows, basis)};
    }

    Eigen::Index rows() const { return mean.size(); }

    static AffineForm stack(std::span<const AffineForm> parts) {
        Eigen::Index rows = 0, basis = parts.empty() ? 0 : parts.front().coef.cols();
        for (const auto& p : parts) rows += p.rows();
        AffineForm out = zero(rows, basis);
        Eigen::Index r = 0;
        for (const auto& p : parts) {
            out.mean.segment(r, p.rows()) = p.mean;
            out.coef.middleRows(r, p.rows()) = p.coef;
            r += p.rows();
        }
        return out;
    }

    GaussianJoint<Scalar> joint(std::vector<std::string> labels = {}) const {
        return {mean, coef * coef.transpose(), std::move(labels)};
    }
};

enum class InverseKind { exact, pseudo };

namespace detail {

template <typename Scalar>
Matrix<Scalar> pseudo_inverse(const Matrix<Scalar>& S) {
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(S);
    const auto& lambda = es.eigenvalues();
    const Scalar cutoff = Scalar(1e-10) * std::max(Scalar(1), lambda.cwiseAbs().maxCoeff());
    Vector<Scalar> inv = Vector<Scalar>::Zero(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i)
        if (lambda(i) > cutoff) inv(i) = Scalar(1) / lambda(i);
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

template <typename Scalar>
Matrix<Scalar> psd_factor(const Matrix<Scalar>& S) {
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(S);
    const Vector<Scalar> root = es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal();
}

}  // namespace detail

/// Linear-Gaussian regression of the first `keep` coordinates on the remaining ones:
/// E[keep | rest] = offset + gain * rest, Cov[keep | rest] = cov.
template <typename Scalar = double>
struct GaussianRegression {
    Vector<Scalar> offset;
    Matrix<Scalar> gain;
    Matrix<Scalar> cov;
};

template <typename Scalar>
GaussianRegression<Scalar> regress(const GaussianJoint<Scalar>& joint, Eigen::Index keep, InverseKind kind) {
    const Eigen::Index rest = joint.dim() - keep;
    const auto S_kk = joint.cov.topLeftCorner(keep, keep);
    const auto S_kr = joint.cov.topRightCorner(keep, rest);
    const Matrix<Scalar> S_rr = joint.cov.bottomRightCorner(rest, rest);

    Matrix<Scalar> gain;
    if (kind == InverseKind::exact) {
        Eigen::LLT<Matrix<Scalar>> llt(S_rr);
        if (llt.info() != Eigen::Success)
            throw SingularConditioning("batch_conditioning_oracle: observation covariance is not positive definite");
        gain = llt.solve(Matrix<Scalar>(S_kr.transpose())).transpose();
    } else {
        gain = S_kr * detail::pseudo_inverse(S_rr);
    }
    GaussianRegression<Scalar> out;
    out.gain = gain;
    out.offset = joint.mean.head(keep) - gain * joint.mean.tail(rest);
    Matrix<Scalar> c = S_kk - gain * S_kr.transpose();
    out.cov = (c + c.transpose()) / Scalar(2);
    return out;
}

/// Posterior of S_n given y_1..y_n computed without the recursion: the joint
/// Gaussian of (S_t, Y_1..Y_t) is propagated in closed form over the white
/// basis (z_1..z_n, w_1..w_n) and conditioned by a Schur complement at every t.
/// The offsets g_t = -d'm_{t-1} are realized from this oracle's own posterior
/// means, so the result is independent of kalman_step.
template <typename Scalar>
PosteriorState<Scalar> batch_conditioning_oracle(const StateSpaceChannel<Scalar>& ch,
                                                 const SourcePolicy<Scalar>& policy, std::span<const Scalar> y) {
    const Eigen::Index M = ch.dim();
    const auto n = static_cast<Eigen::Index>(y.size());
    const Eigen::Index basis = 2 * n;
    const Matrix<Scalar> Q = closed_loop(ch, policy);
    const Scalar sigma = std::sqrt(ch.sigma_w2);

    auto state = AffineForm<Scalar>::zero(M, basis);
    auto outputs = AffineForm<Scalar>::zero(n, basis);
    auto post = PosteriorState<Scalar>::zero(M);
    Vector<Scalar> observed(n);

    for (Eigen::Index t = 0; t < n; ++t) {
        const Scalar g = policy.offset(post);

        outputs.mean(t) = ch.c.dot(state.mean);
        outputs.coef.row(t) = ch.c.transpose() * state.coef;
        outputs.coef(t, n + t) = sigma;

        state.mean = Q * state.mean + ch.b * g;
        state.coef = Q * state.coef;
        state.coef.col(t) += ch.b * policy.e;

        observed(t) = y[static_cast<std::size_t>(t)];
        AffineForm<Scalar> past{outputs.mean.head(t + 1), outputs.coef.topRows(t + 1)};
        const AffineForm<Scalar> parts[] = {state, past};
        const auto joint = AffineForm<Scalar>::stack(parts).joint();
        const auto reg = regress(joint, M, InverseKind::exact);
        post.m = reg.offset + reg.gain * observed.head(t + 1);
        post.K = reg.cov;
    }
    return post;
}

// ---------------------------------------------------------------------------
// Markovization of a lag-2 source
// ---------------------------------------------------------------------------

/// Non-Markov linear source x_t = d1's_{t-1} + d2's_{t-2} + e z_t (s_{-1} = s_0 = 0).
template <typename Scalar = double>
struct LagTwoSource {
    Vector<Scalar> d1;
    Vector<Scalar> d2;
    Scalar e = Scalar(1);
};

/// Builds the Markov source whose transition law is the lag-2 source's
/// conditional law of S_t given (S_{t-1}, Y_1..Y_{t-1}), propagates both
/// sources exactly, and returns the largest deviation between the joint laws
/// of (S_{t-1}, S_t, Y_1..Y_t), t = 1..n. Zero up to rounding when the two
/// sources induce the same distribution.
template <typename Scalar>
Scalar markovization_check(const StateSpaceChannel<Scalar>& ch, const LagTwoSource<Scalar>& src, int n) {
    if (n < 1) throw std::invalid_argument("markovization_check: horizon must be >= 1");
    const Eigen::Index M = ch.dim();
    const Scalar sigma = std::sqrt(ch.sigma_w2);
    using Form = AffineForm<Scalar>;

    // Lag-2 source over the basis (z_1..z_n, w_1..w_n).
    const Eigen::Index basis1 = 2 * n;
    Form prev2 = Form::zero(M, basis1), prev1 = Form::zero(M, basis1);
    Form outputs1 = Form::zero(0, basis1);
    std::vector<GaussianJoint<Scalar>> joints1;
    std::vector<GaussianRegression<Scalar>> transitions;

    for (int t = 0; t < n; ++t) {
        Form x{Vector<Scalar>::Constant(1, src.d1.dot(prev1.mean) + src.d2.dot(prev2.mean)),
               src.d1.transpose() * prev1.coef + src.d2.transpose() * prev2.coef};
        x.coef(0, t) += src.e;

        Form y{Vector<Scalar>::Constant(1, ch.c.dot(prev1.mean)), ch.c.transpose() * prev1.coef};
        y.coef(0, n + t) = sigma;

        Form next{ch.A * prev1.mean + ch.b * x.mean(0), ch.A * prev1.coef + ch.b * x.coef};

        const Form cond_parts[] = {next, prev1, outputs1};
        transitions.push_back(regress(Form::stack(cond_parts).joint(), M, InverseKind::pseudo));

        const Form out_parts[] = {outputs1, y};
        outputs1 = Form::stack(out_parts);
        const Form joint_parts[] = {prev1, next, outputs1};
        joints1.push_back(Form::stack(joint_parts).joint());

        prev2 = std::move(prev1);
        prev1 = std::move(next);
    }

    // Markov source over the basis (xi_1..xi_n in blocks of M, w_1..w_n).
    const Eigen::Index basis2 = static_cast<Eigen::Index>(n) * (M + 1);
    Form state = Form::zero(M, basis2);
    Form outputs2 = Form::zero(0, basis2);
    Scalar deviation(0);
    for (int t = 0; t < n; ++t) {
        const auto& tr = transitions[static_cast<std::size_t>(t)];

        const Form cond_parts[] = {state, outputs2};
        const Form cond = Form::stack(cond_parts);
        Form next{tr.offset + tr.gain * cond.mean, tr.gain * cond.coef};
        next.coef.middleCols(static_cast<Eigen::Index>(t) * M, M) += detail::psd_factor(tr.cov);

        Form y{Vector<Scalar>::Constant(1, ch.c.dot(state.mean)), ch.c.transpose() * state.coef};
        y.coef(0, static_cast<Eigen::Index>(n) * M + t) = sigma;
        const Form out_parts[] = {outputs2, y};
        outputs2 = Form::stack(out_parts);

        const Form joint_parts[] = {state, next, outputs2};
        const auto joint2 = Form::stack(joint_parts).joint();
        const auto& joint1 = joints1[static_cast<std::size_t>(t)];
        deviation = std::max({deviation, max_abs(joint1.mean - joint2.mean), max_abs(joint1.cov - joint2.cov)});

        state = std::move(next);
    }
    return deviation;
}

// ---------------------------------------------------------------------------
// CSV export
// ---------------------------------------------------------------------------

/// FNV-1a over a canonical text rendering of the channel spec (17 significant digits).
template <typename Scalar>
std::uint64_t spec_hash(const ArmaNoiseSpec<Scalar>& spec) {
    std::string text;
    char buf[40];
    auto put = [&](const char* key, const std::vector<Scalar>& vs) {
        text += key;
        for (Scalar v : vs) {
            std::snprintf(buf, sizeof buf, "%.17g,", static_cast<double>(v));
            text += buf;
        }
        text += ';';
    };
    put("a=", spec.a);
    put("c_ar=", spec.c_ar);
    put("sigma_w2=", {spec.sigma_w2});
    put("power=", {spec.power});
    text += "nu=" + std::to_string(spec.nu);

    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <typename Scalar>
void write_trajectory_csv(std::ostream& os, const Trajectory<Scalar>& tr, std::uint64_t hash) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "# spec_hash=%016llx,seed=%llu\n", static_cast<unsigned long long>(hash),
                  static_cast<unsigned long long>(tr.seed));
    os << buf << "t,x,y";
    for (Eigen::Index i = 0; i < tr.states.rows(); ++i) os << ",s" << (i + 1);
    os << '\n';
    auto num = [&](Scalar v) {
        std::snprintf(buf, sizeof buf, ",%.17g", static_cast<double>(v));
        os << buf;
    };
    for (std::size_t t = 0; t < tr.length(); ++t) {
        os << (t + 1);
        num(tr.x[t]);
        num(tr.y[t]);
        for (Eigen::Index i = 0; i < tr.states.rows(); ++i) num(tr.states(i, static_cast<Eigen::Index>(t) + 1));
        os << '\n';
    }
}

}  // namespace dfc
