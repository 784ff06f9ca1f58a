// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "dfcap/channel_model.hpp"
#include "dfcap/kalman.hpp"
#include "dfcap/nelder_mead.hpp"
#include "dfcap/random.hpp"

namespace dfc {

/// Best stationary policy found for a channel at a given power.
/// Rates are in nats.
template <typename Scalar = double>
struct CapacityResult {
    Scalar rate_nats = Scalar(0);
    Vector<Scalar> d_opt;
    Scalar e_opt = Scalar(0);
    Matrix<Scalar> K_opt;
    Scalar achieved_power = Scalar(0);
    Scalar riccati_residual = Scalar(0);
    long optimizer_evaluations = 0;
    int restarts_used = 0;

    SourcePolicy<Scalar> policy() const { return {d_opt, e_opt}; }
};

/// Stationary information rate of a policy, 1/2 log(1 + c'Kc / sigma_w2) at the Riccati fixed point.
template <typename Scalar>
Scalar rate_of(const StateSpaceChannel<Scalar>& ch, const SourcePolicy<Scalar>& policy,
               const RiccatiOptions& opts = {}) {
    return innovation_stats(ch, solve_riccati(ch, policy, opts).K).rate_increment;
}

template <typename Scalar = double>
struct Calibration {
    Scalar e;
    Matrix<Scalar> K;
    Scalar power;
};

struct CalibrationOptions {
    double power_tolerance = 1e-10;   // relative to P
    double lower_bracket = 1e-8;      // smallest e tried, as a fraction of sqrt(P)
    int max_iterations = 200;
    RiccatiOptions riccati{};
};

namespace detail {

template <typename Scalar>
std::optional<Calibration<Scalar>> calibrate_at(const StateSpaceChannel<Scalar>& ch, const Vector<Scalar>& d,
                                                Scalar e, const RiccatiOptions& opts) {
    const SourcePolicy<Scalar> policy{d, e};
    auto sol = try_solve_riccati(ch, policy, opts);
    if (!sol) return std::nullopt;
    const Scalar p = stationary_power(policy, sol->K);
    return Calibration<Scalar>{e, std::move(sol->K), p};
}

}  // namespace detail

/// Root of d'K(d,e)d + e^2 = P over e in (0, sqrt(P)].
///
/// The minimal Riccati solution is nondecreasing in e, so the power is strictly
/// increasing and a bracketing root finder applies. When A + b d' has unstable
/// modes, K(d, e) does not vanish as e -> 0+; if the power at the smallest
/// bracket point already exceeds P the gains are infeasible.
template <typename Scalar>
std::optional<Calibration<Scalar>> try_calibrate_e(const StateSpaceChannel<Scalar>& ch,
                                                   const std::type_identity_t<Vector<Scalar>>& d,
                                                   std::type_identity_t<Scalar> P, const CalibrationOptions& opts = {}) {
    if (!(P > 0)) throw std::invalid_argument("calibrate_e: power must be > 0");
    const Scalar tol = Scalar(opts.power_tolerance) * P;
    const Scalar e_max = std::sqrt(P);

    auto high = detail::calibrate_at(ch, d, e_max, opts.riccati);
    if (!high) return std::nullopt;
    if (high->power - P <= tol) return high;  // power >= e^2, so only e = sqrt(P) lands here

    auto low = detail::calibrate_at(ch, d, Scalar(opts.lower_bracket) * e_max, opts.riccati);
    if (!low) return std::nullopt;
    if (low->power - P > tol) return std::nullopt;
    if (low->power - P >= -tol) return low;

    bool failed = false, hit = false;
    auto excess = [&](Scalar e) -> Scalar {
        if (failed || hit) return Scalar(0);
        auto trial = detail::calibrate_at(ch, d, e, opts.riccati);
        if (!trial) {
            failed = true;
            return Scalar(0);
        }
        const Scalar f = trial->power - P;
        if (std::abs(f) <= tol) hit = true;
        (f < 0 ? low : high) = std::move(trial);
        return f;
    };
    auto done = [&](Scalar a, Scalar b) { return hit || failed || !(b - a > Scalar(0)); };
    std::uintmax_t max_iter = static_cast<std::uintmax_t>(opts.max_iterations);
    boost::math::tools::toms748_solve(excess, low->e, high->e, low->power - P, high->power - P, done, max_iter);
    if (failed) return std::nullopt;

    auto& closest = std::abs(low->power - P) < std::abs(high->power - P) ? low : high;
    if (std::abs(closest->power - P) <= Scalar(100) * tol) return closest;
    return std::nullopt;
}

template <typename Scalar>
Scalar calibrate_e(const StateSpaceChannel<Scalar>& ch, const std::type_identity_t<Vector<Scalar>>& d,
                   std::type_identity_t<Scalar> P, const CalibrationOptions& opts = {}) {
    auto cal = try_calibrate_e(ch, d, P, opts);
    if (!cal)
        throw Infeasible("calibrate_e: no e in (0, sqrt(P)] satisfies the power constraint d'Kd + e^2 = P "
                         "for the requested feedback gains d");
    return cal->e;
}

struct OptimizerOptions {
    int restarts = 16;
    double random_box = 5.0;
    std::uint64_t seed = 0x5EED'CAFE'F00DULL;
    int threads = 1;
    NelderMeadOptions simplex{};
    CalibrationOptions calibration{};
};

namespace detail {

template <typename Scalar>
bool lexicographically_less(const Vector<Scalar>& a, const Vector<Scalar>& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

template <typename Scalar>
std::vector<Vector<Scalar>> restart_points(Eigen::Index M, Scalar P, const OptimizerOptions& opts) {
    std::vector<Vector<Scalar>> starts;
    const auto count = static_cast<std::size_t>(std::max(1, opts.restarts));
    starts.push_back(Vector<Scalar>::Zero(M));
    for (Eigen::Index i = 0; i < M && starts.size() < count; ++i) {
        starts.push_back(std::sqrt(P) * Vector<Scalar>::Unit(M, i));
        if (starts.size() < count) starts.push_back(-std::sqrt(P) * Vector<Scalar>::Unit(M, i));
    }
    SplitMix64 rng(opts.seed);
    while (starts.size() < count) {
        Vector<Scalar> d(M);
        for (Eigen::Index i = 0; i < M; ++i) d(i) = Scalar(rng.uniform(-opts.random_box, opts.random_box));
        starts.push_back(std::move(d));
    }
    return starts;
}

}  // namespace detail

/// Maximizes the stationary rate over feedback gains d, with e eliminated by
/// calibrate_e. Multi-start Nelder-Mead; d = 0 is always the first start so
/// the result never falls below the no-feedback rate.
template <typename Scalar>
CapacityResult<Scalar> optimize_capacity(const StateSpaceChannel<Scalar>& ch, Scalar P,
                                         const OptimizerOptions& opts = {}) {
    if (!(P > 0)) throw std::invalid_argument("optimize_capacity: power must be > 0");
    const auto starts = detail::restart_points(ch.dim(), P, opts);

    auto objective = [&](const Vector<Scalar>& d) -> Scalar {
        auto cal = try_calibrate_e(ch, d, P, opts.calibration);
        if (!cal) return std::numeric_limits<Scalar>::infinity();
        return -innovation_stats(ch, cal->K).rate_increment;
    };

    std::vector<NelderMeadResult<Scalar>> runs(starts.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < starts.size(); i = next++)
            runs[i] = nelder_mead<Scalar>(objective, starts[i], opts.simplex);
    };
    const int threads = std::clamp(opts.threads, 1, static_cast<int>(starts.size()));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    long evaluations = 0;
    std::size_t best = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        evaluations += runs[i].evaluations;
        const bool better = runs[i].value < runs[best].value ||
                            (runs[i].value == runs[best].value &&
                             detail::lexicographically_less(runs[i].x, runs[best].x));
        if (better) best = i;
    }

    CapacityResult<Scalar> result;
    result.optimizer_evaluations = evaluations;
    result.restarts_used = static_cast<int>(starts.size());

    auto cal = try_calibrate_e(ch, runs[best].x, P, opts.calibration);
    result.d_opt = runs[best].x;
    if (!cal) {
        // Only reachable if even d = 0 failed, which cannot happen for a valid channel.
        result.d_opt.setZero();
        cal = try_calibrate_e(ch, result.d_opt, P, opts.calibration);
        if (!cal) throw Divergence("optimize_capacity: Riccati iteration failed at d = 0");
    }
    const SourcePolicy<Scalar> policy{result.d_opt, cal->e};
    result.e_opt = cal->e;
    result.K_opt = cal->K;
    result.rate_nats = innovation_stats(ch, cal->K).rate_increment;
    result.achieved_power = stationary_power(policy, cal->K);
    result.riccati_residual = riccati_residual(ch, policy, cal->K);
    return result;
}

/// Average of the per-step rate increments over n steps of the covariance recursion from K_0 = 0.
template <typename Scalar>
Scalar finite_horizon_rate(const StateSpaceChannel<Scalar>& ch, const SourcePolicy<Scalar>& policy, long n) {
    if (n < 1) throw std::invalid_argument("finite_horizon_rate: n must be >= 1");
    Matrix<Scalar> K = Matrix<Scalar>::Zero(ch.dim(), ch.dim());
    Scalar total(0);
    for (long t = 1; t <= n; ++t) {
        total += innovation_stats(ch, K).rate_increment;
        if (t < n) K = riccati_map(ch, policy, K);
    }
    return total / Scalar(n);
}

/// White-input (d = 0, e = sqrt(P)) rate from the spectral entropy-rate integral
///   (1/4pi) int_{-pi}^{pi} log(1 + P |G(e^{jw})|^2 / sigma_w2) dw.
template <typename Scalar>
Scalar szego_rate_check(const ArmaNoiseSpec<Scalar>& spec, Scalar P, Scalar abs_tolerance = Scalar(1e-10)) {
    const Scalar pi = std::numbers::pi_v<Scalar>;
    auto integrand = [&](Scalar w) {
        return std::log1p(P * std::norm(equivalent_channel_response(spec, w)) / spec.sigma_w2);
    };

    Scalar err(0);
    const Scalar integral = boost::math::quadrature::gauss_kronrod<Scalar, 61>::integrate(
        integrand, -pi, pi, 15, Scalar(1e-13), &err);
    const Scalar scale = Scalar(4) * pi;
    const Scalar adaptive = integral / scale;
    if (err / scale <= abs_tolerance) return adaptive;

    // Smooth periodic integrand: the uniform trapezoid rule converges geometrically.
    constexpr int kPoints = 4096;
    Scalar sum(0);
    for (int i = 0; i < kPoints; ++i) sum += integrand(-pi + Scalar(2) * pi * Scalar(i) / Scalar(kPoints));
    const Scalar trapezoid = sum * (Scalar(2) * pi / Scalar(kPoints)) / scale;
    if (std::abs(trapezoid - adaptive) <= Scalar(1e-9)) return trapezoid;
    throw QuadratureFailure("szego_rate_check: adaptive quadrature missed the 1e-10 tolerance and the "
                            "trapezoid cross-check disagrees");
}

enum class SweepAxis { nu, power };

template <typename Scalar = double>
struct SweepRow {
    Scalar value;
    std::optional<CapacityResult<Scalar>> result;
    std::string error;
};

/// Runs optimize_capacity for each value of the chosen axis. Per-row failures
/// are recorded and the sweep continues.
template <typename Scalar>
std::vector<SweepRow<Scalar>> sweep(const ArmaNoiseSpec<Scalar>& base, SweepAxis axis,
                                    const std::vector<Scalar>& values, const OptimizerOptions& opts = {}) {
    if (values.empty()) throw std::invalid_argument("sweep: values must be nonempty");
    std::vector<SweepRow<Scalar>> rows;
    rows.reserve(values.size());
    for (Scalar v : values) {
        SweepRow<Scalar> row{v, std::nullopt, {}};
        try {
            ArmaNoiseSpec<Scalar> spec = base;
            if (axis == SweepAxis::nu) {
                if (v != std::floor(v)) throw InvalidScalar("nu", "must be an integer >= 1");
                spec.nu = static_cast<int>(v);
            } else {
                spec.power = v;
            }
            spec = validate_arma_spec(spec);
            row.result = optimize_capacity(build_state_space(spec), spec.power, opts);
        } catch (const std::exception& ex) {
            row.error = ex.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace dfc
