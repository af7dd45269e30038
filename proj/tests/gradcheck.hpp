#pragma once

// Central finite-difference gradient checks for layers and the full denoiser.

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "support.hpp"
#include "uwdiff/nn/denoiser.hpp"
#include "uwdiff/nn/layers.hpp"

namespace testsupport {

struct GradReport {
    double max_error = 0.0;
    std::string worst;  // parameter (or "input") with the largest error
    std::size_t checked = 0;
};

inline void record(GradReport& r, const std::string& what, double err, std::size_t n) {
    r.checked += n;
    if (err >= r.max_error) {
        r.max_error = err;
        r.worst = what;
    }
}

/// `forward` evaluates the layer from the current store values and `x`;
/// `backward` runs the analytic pass for upstream gradient `gy`, filling
/// `grads` and returning dL/dx (empty to skip the input check).
/// `stride` > 1 checks every stride-th scalar of each parameter.
inline GradReport check_gradients(
    uwdiff::nn::ParamStore& store, uwdiff::Tensor3& x, const std::function<uwdiff::Tensor3()>& forward,
    const std::function<uwdiff::Tensor3(const uwdiff::Tensor3& gy, uwdiff::nn::Gradients& grads)>& backward,
    Rng& rng, std::size_t stride = 1, double h = 1e-4) {
    const uwdiff::Tensor3 y = forward();
    const LinearProbe probe(y.height(), y.width(), y.channels(), rng);
    uwdiff::nn::Gradients grads(store);
    const uwdiff::Tensor3 gx = backward(probe.weights, grads);
    const auto loss = [&] { return probe(forward()); };

    GradReport report;
    for (std::size_t id = 0; id < store.size(); ++id) {
        auto& values = store.entry(id).values;
        std::vector<double> analytic, numeric;
        for (std::size_t i = 0; i < values.size(); i += stride) {
            analytic.push_back(grads[id][i]);
            numeric.push_back(central_difference(loss, values[i], h));
        }
        record(report, store.entry(id).name, relative_error(analytic, numeric), analytic.size());
    }
    if (!gx.empty()) {
        std::vector<double> analytic, numeric;
        for (std::size_t i = 0; i < x.size(); ++i) {
            analytic.push_back(gx[i]);
            numeric.push_back(central_difference(loss, x[i], h));
        }
        record(report, "input", relative_error(analytic, numeric), analytic.size());
    }
    return report;
}

/// Overwrites every parameter with a random value so that no path through
/// the network is trivially zero (the trained head starts at zero).
inline void randomize(uwdiff::nn::ParamStore& store, Rng& rng, double scale = 0.5) {
    for (auto& e : store.entries()) {
        const bool is_gamma = e.name.ends_with(".gamma");
        for (double& v : e.values) v = (is_gamma ? 1.0 : 0.0) + uniform(rng, -scale, scale);
    }
}

/// Full denoiser check on an h x w input.
inline GradReport check_denoiser(const uwdiff::nn::DenoiserConfig& cfg, int h, int w, std::uint64_t seed,
                                 std::size_t stride = 1) {
    Rng rng(seed);
    uwdiff::nn::Denoiser model(cfg);
    randomize(model.params(), rng);
    uwdiff::Tensor3 x = random_tensor(h, w, 3, rng);
    const uwdiff::Tensor3 cond = random_tensor(h, w, 3, rng);
    const int t = 731;
    uwdiff::nn::Activations act;
    return check_gradients(
        model.params(), x, [&] { return model.forward(x, cond, t); },
        [&](const uwdiff::Tensor3& gy, uwdiff::nn::Gradients& grads) {
            model.forward(x, cond, t, &act);
            model.backward(gy, act, grads);
            return uwdiff::Tensor3();
        },
        rng, stride);
}

}  // namespace testsupport
