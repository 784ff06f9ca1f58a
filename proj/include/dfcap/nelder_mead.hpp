// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "dfcap/core.hpp"

namespace dfc {

struct NelderMeadOptions {
    double initial_step = 0.25;
    double diameter_tolerance = 1e-9;
    long max_evaluations = 20000;
};

template <typename Scalar = double>
struct NelderMeadResult {
    Vector<Scalar> x;
    Scalar value;
    long evaluations = 0;
    bool converged = false;
};

/// Minimizes `f` by the standard Nelder-Mead simplex (reflection 1,
/// expansion 2, contraction 1/2, shrink 1/2). `f` may return +inf to reject a point.
template <typename Scalar, typename F>
NelderMeadResult<Scalar> nelder_mead(F&& f, const Vector<Scalar>& x0, const NelderMeadOptions& opts = {}) {
    const Eigen::Index n = x0.size();
    std::vector<Vector<Scalar>> pts(static_cast<std::size_t>(n + 1), x0);
    std::vector<Scalar> vals(static_cast<std::size_t>(n + 1));
    long evals = 0;
    auto eval = [&](const Vector<Scalar>& x) {
        ++evals;
        return f(x);
    };

    vals[0] = eval(x0);
    if (!std::isfinite(static_cast<double>(vals[0]))) return {x0, vals[0], evals, false};
    for (Eigen::Index i = 0; i < n; ++i) {
        auto& p = pts[static_cast<std::size_t>(i + 1)];
        p(i) += Scalar(opts.initial_step) * std::max(Scalar(1), std::abs(x0(i)));
        vals[static_cast<std::size_t>(i + 1)] = eval(p);
    }

    std::vector<std::size_t> order(pts.size());
    bool converged = false;
    while (evals < opts.max_evaluations) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return vals[i] < vals[j]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];

        Scalar diameter(0);
        for (const auto& p : pts) diameter = std::max(diameter, max_abs(p - pts[best]));
        if (diameter < Scalar(opts.diameter_tolerance)) {
            converged = true;
            break;
        }

        Vector<Scalar> centroid = Vector<Scalar>::Zero(n);
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (i != worst) centroid += pts[i];
        centroid /= Scalar(n);

        const Vector<Scalar> reflected = centroid + (centroid - pts[worst]);
        const Scalar fr = eval(reflected);
        if (fr < vals[best]) {
            const Vector<Scalar> expanded = centroid + Scalar(2) * (centroid - pts[worst]);
            const Scalar fe = eval(expanded);
            if (fe < fr) {
                pts[worst] = expanded;
                vals[worst] = fe;
            } else {
                pts[worst] = reflected;
                vals[worst] = fr;
            }
            continue;
        }
        if (fr < vals[second]) {
            pts[worst] = reflected;
            vals[worst] = fr;
            continue;
        }

        const bool outside = fr < vals[worst];
        const Vector<Scalar> contracted = outside ? Vector<Scalar>(centroid + Scalar(0.5) * (reflected - centroid))
                                                  : Vector<Scalar>(centroid + Scalar(0.5) * (pts[worst] - centroid));
        const Scalar fc = eval(contracted);
        if (fc < (outside ? fr : vals[worst])) {
            pts[worst] = contracted;
            vals[worst] = fc;
            continue;
        }

        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i == best) continue;
            pts[i] = pts[best] + Scalar(0.5) * (pts[i] - pts[best]);
            vals[i] = eval(pts[i]);
        }
    }

    const auto it = std::min_element(vals.begin(), vals.end());
    const auto idx = static_cast<std::size_t>(std::distance(vals.begin(), it));
    return {pts[idx], vals[idx], evals, converged};
}

}  // namespace dfc
