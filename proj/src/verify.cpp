// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "dfcap/cli.hpp"
#include "dfcap/kalman.hpp"
#include "dfcap/random.hpp"
#include "dfcap/simulator.hpp"

namespace dfc::cli {
namespace {

constexpr double kSzegoTolerance = 1e-8;
constexpr double kGaussianTolerance = 1e-9;
constexpr int kBatchHorizon = 6;
constexpr int kMarkovHorizon = 5;
constexpr std::size_t kEquivalenceSteps = 1000;

bool selected(const std::vector<std::string>& selection, const std::string& name) {
    return selection.empty() || std::find(selection.begin(), selection.end(), name) != selection.end();
}

Vector<double> random_gains(SplitMix64& rng, Eigen::Index M, double scale) {
    Vector<double> d(M);
    for (Eigen::Index i = 0; i < M; ++i) d(i) = rng.uniform(-scale, scale);
    return d;
}

OracleReport szego_oracle(const ArmaNoiseSpec<double>& spec) {
    const auto ch = build_state_space(spec);
    const auto policy = SourcePolicy<double>::open_loop(ch.dim(), std::sqrt(spec.power));
    const double dev = std::abs(rate_of(ch, policy) - szego_rate_check(spec, spec.power));
    return {"szego", dev < kSzegoTolerance, dev, kSzegoTolerance};
}

OracleReport batch_oracle(const ArmaNoiseSpec<double>& spec, SplitMix64& rng) {
    const auto ch = build_state_space(spec);
    const SourcePolicy<double> policy{random_gains(rng, ch.dim(), 0.5), std::max(std::sqrt(spec.power), 0.1)};
    std::vector<double> y(kBatchHorizon);
    for (auto& v : y) v = 2.0 * rng.normal();

    auto post = PosteriorState<double>::zero(ch.dim());
    for (double v : y) post = kalman_step(ch, policy, post, v);
    const auto oracle = batch_conditioning_oracle(ch, policy, std::span<const double>(y));
    const double dev = std::max(max_abs(post.m - oracle.m), max_abs(post.K - oracle.K));
    return {"batch", dev < kGaussianTolerance, dev, kGaussianTolerance};
}

OracleReport markov_oracle(const ArmaNoiseSpec<double>& spec, SplitMix64& rng) {
    const auto ch = build_state_space(spec);
    const LagTwoSource<double> src{random_gains(rng, ch.dim(), 0.4), random_gains(rng, ch.dim(), 0.4), 1.0};
    const double dev = markovization_check(ch, src, kMarkovHorizon);
    return {"markov", dev < kGaussianTolerance, dev, kGaussianTolerance};
}

OracleReport equivalence_oracle(const ArmaNoiseSpec<double>& spec, SplitMix64& rng) {
    const auto ch = build_state_space(spec);
    const double sigma = std::sqrt(spec.sigma_w2);
    std::vector<double> x(kEquivalenceSteps), v(kEquivalenceSteps), w(kEquivalenceSteps, 0.0);
    for (std::size_t t = 0; t < kEquivalenceSteps; ++t) {
        x[t] = rng.normal();
        v[t] = sigma * rng.normal();
    }
    const auto nu = static_cast<std::size_t>(spec.nu);
    for (std::size_t t = nu; t < kEquivalenceSteps; ++t) w[t] = v[t - nu];

    const auto original = simulate_original_channel(spec, std::span<const double>(x), std::span<const double>(v));
    const auto derived = run_state_space(ch, std::span<const double>(x), std::span<const double>(w));
    double dev = 0.0;
    for (std::size_t t = 0; t < kEquivalenceSteps; ++t) dev = std::max(dev, std::abs(original.y_delayed[t] - derived[t]));
    return {"equivalence", dev < kGaussianTolerance, dev, kGaussianTolerance};
}

}  // namespace

std::vector<OracleReport> run_oracles(const ArmaNoiseSpec<double>& spec, std::uint64_t seed,
                                      const std::vector<std::string>& selection) {
    SplitMix64 rng(seed);
    std::vector<OracleReport> reports;
    if (selected(selection, "szego")) reports.push_back(szego_oracle(spec));
    if (selected(selection, "batch")) reports.push_back(batch_oracle(spec, rng));
    if (selected(selection, "markov")) reports.push_back(markov_oracle(spec, rng));
    if (selected(selection, "equivalence")) reports.push_back(equivalence_oracle(spec, rng));
    return reports;
}

}  // namespace dfc::cli
