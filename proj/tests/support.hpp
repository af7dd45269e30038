#pragma once

// Hand-rolled generators and numeric helpers shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "uwdiff/random.hpp"
#include "uwdiff/tensor.hpp"

namespace testsupport {

using uwdiff::Rng;
using uwdiff::Tensor3;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline Tensor3 random_tensor(int h, int w, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor3 t(h, w, c);
    for (double& v : t.storage()) v = uniform(rng, lo, hi);
    return t;
}

inline Tensor3 scalar(double v) { return Tensor3(1, 1, 1, v); }

/// Random strictly decreasing list from T to 0 with `length` entries.
inline std::vector<int> random_legal_steps(Rng& rng, int T, int length) {
    std::set<int> interior;
    while (static_cast<int>(interior.size()) < length - 2) interior.insert(uniform_int(rng, 1, T - 1));
    std::vector<int> steps{T};
    steps.insert(steps.end(), interior.rbegin(), interior.rend());
    steps.push_back(0);
    return steps;
}

/// Central finite difference of `loss` with respect to `x`.
inline double central_difference(const std::function<double()>& loss, double& x, double h = 1e-4) {
    const double saved = x;
    x = saved + h;
    const double up = loss();
    x = saved - h;
    const double down = loss();
    x = saved;
    return (up - down) / (2.0 * h);
}

/// max|a - n| / max(max|n|, floor): norm-wise relative error.
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                             double floor = 1e-8) {
    double diff = 0.0;
    double scale = floor;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
        scale = std::max(scale, std::abs(numeric[i]));
    }
    return diff / scale;
}

/// Fixed random linear functional L(y) = sum(r * y) so every output element
/// gets a distinct upstream gradient r.
struct LinearProbe {
    Tensor3 weights;

    LinearProbe(int h, int w, int c, Rng& rng) : weights(random_tensor(h, w, c, rng)) {}

    double operator()(const Tensor3& y) const {
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += weights[i] * y[i];
        return s;
    }
};

}  // namespace testsupport
