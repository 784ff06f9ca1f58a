// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sstream>

#include "dfcap/capacity.hpp"
#include "dfcap/simulator.hpp"
#include "support/oracles.hpp"

using namespace dfc;

namespace {

ArmaNoiseSpec<double> spec_of(std::vector<double> a, std::vector<double> c, int nu, double s2 = 1.0) {
    ArmaNoiseSpec<double> s;
    s.a = std::move(a);
    s.c_ar = std::move(c);
    s.nu = nu;
    s.sigma_w2 = s2;
    return validate_arma_spec(s);
}

Vector<double> random_vector(SplitMix64& rng, Eigen::Index n, double scale) {
    Vector<double> v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(-scale, scale);
    return v;
}

}  // namespace

TEST_CASE("SplitMix64 streams are reproducible") {
    SplitMix64 a(123), b(123), c(124);
    for (int i = 0; i < 100; ++i) {
        const auto x = a();
        CHECK(x == b());
        CHECK(x != c());
    }
    // Reference output of SplitMix64 seeded with 0.
    SplitMix64 ref(0);
    CHECK(ref() == 0xE220A8397B1DCDAFULL);
}

TEST_CASE("simulate_closed_loop: silent transmitter") {
    const auto ch = build_state_space(spec_of({0.5, -0.1}, {0.3}, 2));
    const auto run = simulate_closed_loop(ch, SourcePolicy<double>::open_loop(ch.dim(), 0.0), 500, 9);
    for (std::size_t t = 0; t < run.trajectory.length(); ++t) {
        CHECK(run.trajectory.x[t] == 0.0);
        CHECK(run.trajectory.y[t] == run.trajectory.w[t]);
    }
}

TEST_CASE("simulate_closed_loop: trajectory obeys the state equation and is reproducible") {
    const auto ch = build_state_space(spec_of({0.4}, {0.2}, 2));
    const SourcePolicy<double> policy{Eigen::Vector3d(0.3, -0.2, 0.1), 0.8};
    const auto run = simulate_closed_loop(ch, policy, 2000, 31);
    const auto& tr = run.trajectory;
    CHECK(tr.states.col(0).isZero(0.0));
    for (std::size_t t = 0; t < tr.length(); ++t) {
        const auto k = static_cast<Eigen::Index>(t);
        const Vector<double> expected = ch.A * tr.states.col(k) + ch.b * tr.x[t];
        CHECK(tr.states.col(k + 1) == expected);
        CHECK(tr.y[t] == ch.c.dot(tr.states.col(k)) + tr.w[t]);
    }
    const auto again = simulate_closed_loop(ch, policy, 2000, 31);
    CHECK(again.trajectory.x == tr.x);
    CHECK(again.trajectory.y == tr.y);
    CHECK(again.trajectory.states == tr.states);
    const auto other = simulate_closed_loop(ch, policy, 2000, 32);
    CHECK(other.trajectory.x != tr.x);
}

TEST_CASE("simulate_closed_loop: white noise statistics") {
    const auto ch = build_state_space(spec_of({}, {}, 1));
    const auto run = simulate_closed_loop(ch, SourcePolicy<double>{Vector<double>::Zero(1), 1.0}, 1'000'000, 2);
    CHECK(std::abs(run.stats.input_power - 1.0) < 0.01);
    CHECK(std::abs(run.stats.innovation_variance - 2.0) < 0.02);
    CHECK(std::abs(run.stats.input_mean) < 3.0 * std::sqrt(1.0 / 1e6));
    CHECK(std::abs(run.stats.information_density - 0.5 * std::log(2.0)) < 0.01);
}

TEST_CASE("simulate_original_channel examples") {
    SUBCASE("white noise passes x + v") {
        SplitMix64 rng(4);
        std::vector<double> x(50), v(50);
        for (std::size_t t = 0; t < 50; ++t) {
            x[t] = rng.normal();
            v[t] = rng.normal();
        }
        const auto out = simulate_original_channel(spec_of({}, {}, 1), std::span<const double>(x),
                                                   std::span<const double>(v));
        for (std::size_t t = 0; t < 50; ++t) CHECK(out.u[t] == x[t] + v[t]);
    }
    SUBCASE("impulse through 1 / (1 - 0.5 z^-1)") {
        std::vector<double> x(20, 0.0), v(20, 0.0);
        x[0] = 1.0;
        const auto out = simulate_original_channel(spec_of({0.5}, {}, 1), std::span<const double>(x),
                                                   std::span<const double>(v));
        for (std::size_t t = 0; t < 20; ++t) CHECK(out.u[t] == doctest::Approx(std::pow(0.5, static_cast<double>(t))));
        CHECK(out.y_delayed[0] == 0.0);
        for (std::size_t t = 1; t < 20; ++t) CHECK(out.y_delayed[t] == out.u[t - 1]);
    }
    SUBCASE("original-channel delayed output equals the state-space output") {
        SplitMix64 rng(17);
        for (int trial = 0; trial < 10; ++trial) {
            const auto spec = validate_arma_spec(test::random_spec(rng, 3, 4));
            const auto ch = build_state_space(spec);
            const std::size_t n = 1000;
            std::vector<double> x(n), v(n), w(n, 0.0);
            for (std::size_t t = 0; t < n; ++t) {
                x[t] = rng.normal();
                v[t] = std::sqrt(spec.sigma_w2) * rng.normal();
            }
            for (std::size_t t = static_cast<std::size_t>(spec.nu); t < n; ++t) w[t] = v[t - static_cast<std::size_t>(spec.nu)];
            const auto original =
                simulate_original_channel(spec, std::span<const double>(x), std::span<const double>(v));
            const auto derived = run_state_space(ch, std::span<const double>(x), std::span<const double>(w));
            double dev = 0.0;
            for (std::size_t t = 0; t < n; ++t) dev = std::max(dev, std::abs(original.y_delayed[t] - derived[t]));
            CHECK(dev < 1e-9);
        }
    }
}

TEST_CASE("batch_conditioning_oracle examples") {
    SUBCASE("first observation carries no signal") {
        const auto ch = build_state_space(spec_of({}, {}, 1));
        const std::vector<double> y{0.0};
        const auto post = batch_conditioning_oracle(ch, SourcePolicy<double>{Vector<double>::Zero(1), 1.0},
                                                    std::span<const double>(y));
        CHECK(post.m(0) == doctest::Approx(0.0));
        CHECK(post.K(0, 0) == doctest::Approx(1.0));
    }
    SUBCASE("n = 3 on a = [0.5, 0], nu = 2") {
        const auto ch = build_state_space(spec_of({0.5, 0.0}, {}, 2));
        const SourcePolicy<double> policy{Vector<double>::Zero(2), 1.0};
        const std::vector<double> y{0.4, -1.1, 0.7};
        auto post = PosteriorState<double>::zero(2);
        for (double v : y) post = kalman_step(ch, policy, post, v);
        const auto oracle = batch_conditioning_oracle(ch, policy, std::span<const double>(y));
        CHECK(max_abs(post.m - oracle.m) < 1e-9);
        CHECK(max_abs(post.K - oracle.K) < 1e-9);
    }
    SUBCASE("randomized agreement with the recursion") {
        SplitMix64 rng(606);
        for (int trial = 0; trial < 50; ++trial) {
            const auto ch = build_state_space(validate_arma_spec(test::random_spec(rng, 2, 2)));
            if (ch.dim() > 3) continue;
            const SourcePolicy<double> policy{random_vector(rng, ch.dim(), 1.0), rng.uniform(0.1, 2.0)};
            std::vector<double> y(6);
            for (auto& v : y) v = 2.0 * rng.normal();
            auto post = PosteriorState<double>::zero(ch.dim());
            for (double v : y) post = kalman_step(ch, policy, post, v);
            const auto oracle = batch_conditioning_oracle(ch, policy, std::span<const double>(y));
            CHECK(max_abs(post.m - oracle.m) < 1e-9);
            CHECK(max_abs(post.K - oracle.K) < 1e-9);
        }
    }
}

TEST_CASE("markovization_check") {
    SUBCASE("an already-Markov source") {
        const auto ch = build_state_space(spec_of({0.5, 0.0}, {}, 2));
        const LagTwoSource<double> src{Eigen::Vector2d(0.3, -0.2), Eigen::Vector2d::Zero(), 1.0};
        CHECK(markovization_check(ch, src, 5) < 1e-12);
    }
    SUBCASE("white noise, lag-2 source") {
        const auto ch = build_state_space(spec_of({}, {}, 1));
        const LagTwoSource<double> src{Vector<double>::Constant(1, 0.3), Vector<double>::Constant(1, 0.2), 1.0};
        CHECK(markovization_check(ch, src, 4) < 1e-9);
    }
    SUBCASE("randomized gains on a = [0.5, 0], nu = 2") {
        SplitMix64 rng(12);
        const auto ch = build_state_space(spec_of({0.5, 0.0}, {}, 2));
        for (int trial = 0; trial < 25; ++trial) {
            const LagTwoSource<double> src{random_vector(rng, 2, 0.5), random_vector(rng, 2, 0.5),
                                           rng.uniform(0.2, 1.5)};
            CHECK(markovization_check(ch, src, 5) < 1e-9);
        }
    }
}

TEST_CASE("GaussianJoint regression matches textbook conditioning") {
    // (X, Y) with var X = 2, var Y = 1, cov = 0.5: E[X|Y] = 0.5 y, Var = 1.75.
    GaussianJoint<double> joint{Eigen::Vector2d(1.0, -1.0), Eigen::Matrix2d{{2.0, 0.5}, {0.5, 1.0}}, {"X", "Y"}};
    for (auto kind : {InverseKind::exact, InverseKind::pseudo}) {
        const auto reg = regress(joint, 1, kind);
        CHECK(reg.gain(0, 0) == doctest::Approx(0.5));
        CHECK(reg.offset(0) == doctest::Approx(1.5));
        CHECK(reg.cov(0, 0) == doctest::Approx(1.75));
    }
    GaussianJoint<double> singular{Eigen::Vector2d::Zero(), Eigen::Matrix2d{{1.0, 0.0}, {0.0, 0.0}}, {}};
    CHECK_THROWS_AS(regress(singular, 1, InverseKind::exact), SingularConditioning);
}

TEST_CASE("trajectory CSV export") {
    auto spec = spec_of({0.5}, {}, 2);
    const auto ch = build_state_space(spec);
    const auto run = simulate_closed_loop(ch, SourcePolicy<double>{Eigen::Vector2d(0.1, 0.0), 1.0}, 3, 99);
    std::ostringstream os;
    write_trajectory_csv(os, run.trajectory, spec_hash(spec));
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    CHECK(line.starts_with("# spec_hash="));
    CHECK(line.ends_with(",seed=99"));
    std::getline(in, line);
    CHECK(line == "t,x,y,s1,s2");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 3);

    auto other = spec;
    other.power = 2.0;
    CHECK(spec_hash(other) != spec_hash(spec));
    CHECK(spec_hash(spec) == spec_hash(spec_of({0.5}, {}, 2)));
}
