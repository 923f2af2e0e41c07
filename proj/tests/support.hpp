#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "tba/rng.hpp"
#include "tba/tensor.hpp"

namespace tba::test {

inline std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Random values bounded away from zero, for kinked ops (relu, clip edges).
inline std::vector<double> random_vec_no_kink(Rng& rng, std::size_t n, double margin = 1e-2) {
    std::vector<double> v(n);
    for (auto& x : v) {
        do {
            x = rng.uniform(-1.0, 1.0);
        } while (std::fabs(x) < margin);
    }
    return v;
}

inline double rel_err(double a, double b) {
    double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
    return std::fabs(a - b) / denom;
}

// Central finite difference d f / d x[i] with a kink guard: when the h and
// h/2 estimates disagree the point is treated as non-differentiable and the
// caller should skip it (returns false).
inline bool central_diff(const std::function<double(const std::vector<double>&)>& f,
                         std::vector<double> x, std::size_t i, double h, double& out) {
    auto probe = [&](double step) {
        double orig = x[i];
        x[i] = orig + step;
        double fp = f(x);
        x[i] = orig - step;
        double fm = f(x);
        x[i] = orig;
        return (fp - fm) / (2.0 * step);
    };
    double d1 = probe(h);
    double d2 = probe(h / 2.0);
    out = d1;
    return rel_err(d1, d2) < 1e-5;
}

// Checks autodiff gradients of `build` (scalar graph over a leaf vector of
// size n) against central differences at `trials` random points, probing
// `coords` coordinates per trial. Returns max relative error over all
// accepted probes.
struct GradCheck {
    std::size_t trials_run = 0;
    std::size_t probes = 0;
    std::size_t skipped = 0;
    double max_rel_err = 0.0;
};

inline GradCheck check_gradient(Rng& rng, std::size_t n,
                                const std::function<Tensor(const Tensor&)>& build,
                                std::size_t trials, std::size_t coords, double h = 1e-5,
                                bool avoid_kinks = false) {
    GradCheck rep;
    for (std::size_t t = 0; t < trials; ++t) {
        std::vector<double> xv =
            avoid_kinks ? random_vec_no_kink(rng, n) : random_vec(rng, n);
        Tensor x = Tensor::from_data({static_cast<int>(n)}, xv, true);
        Tensor y = build(x);
        backward(y);
        auto g = x.grad();
        auto f = [&](const std::vector<double>& v) {
            Tensor xx = Tensor::from_data({static_cast<int>(n)}, v, false);
            return build(xx).item();
        };
        for (std::size_t c = 0; c < coords; ++c) {
            std::size_t i = rng.uniform_int(0, static_cast<std::int64_t>(n) - 1);
            double fd;
            if (!central_diff(f, xv, i, h, fd)) {
                ++rep.skipped;
                continue;
            }
            ++rep.probes;
            rep.max_rel_err = std::max(rep.max_rel_err, rel_err(g[i], fd));
        }
        ++rep.trials_run;
    }
    return rep;
}

}  // namespace tba::test
