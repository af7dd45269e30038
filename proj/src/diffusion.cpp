#include "uwdiff/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "uwdiff/random.hpp"

namespace uwdiff {

namespace {

ImageTensor evaluate_model(const DenoiserFn& model, const ImageTensor& x_t, const ImageTensor& cond, int t) {
    ImageTensor eps_hat = model(x_t, cond, t);
    require_same_shape(eps_hat, x_t, "denoiser output");
    return eps_hat;
}

void require_step(int t, const NoiseSchedule& sched, int lowest) {
    if (t < lowest || t > sched.steps()) {
        throw std::out_of_range("time step " + std::to_string(t) + " outside [" + std::to_string(lowest) +
                                ", " + std::to_string(sched.steps()) + "]");
    }
}

}  // namespace

ImageTensor q_sample(const ImageTensor& x0, int t, const ImageTensor& eps, const NoiseSchedule& sched) {
    require_same_shape(x0, eps, "q_sample");
    require_step(t, sched, 0);
    const double ab = sched.alpha_bar(t);
    const double signal = std::sqrt(ab);
    const double noise = std::sqrt(1.0 - ab);
    ImageTensor out(x0.height(), x0.width(), x0.channels());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = signal * x0[i] + noise * eps[i];
    return out;
}

double training_loss(const DenoiserFn& model, const ImageTensor& x0, const ImageTensor& cond, int t,
                     const ImageTensor& eps, const NoiseSchedule& sched) {
    require_step(t, sched, 1);
    const ImageTensor x_t = q_sample(x0, t, eps, sched);
    return mean_abs_diff(eps, evaluate_model(model, x_t, cond, t));
}

ImageTensor predict_x0(const ImageTensor& x_t, const ImageTensor& eps_hat, int t, const NoiseSchedule& sched) {
    require_same_shape(x_t, eps_hat, "predict_x0");
    require_step(t, sched, 0);
    const double ab = sched.alpha_bar(t);
    const double noise = std::sqrt(1.0 - ab);
    const double inv_signal = 1.0 / std::sqrt(ab);
    ImageTensor out(x_t.height(), x_t.width(), x_t.channels());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - noise * eps_hat[i]) * inv_signal;
    return out;
}

ImageTensor ddpm_step(const DenoiserFn& model, const ImageTensor& x_t, const ImageTensor& cond, int t,
                      const ImageTensor& z, const NoiseSchedule& sched) {
    require_step(t, sched, 1);
    const ImageTensor eps_hat = evaluate_model(model, x_t, cond, t);
    const double beta = sched.beta(t);
    const double eps_coef = beta / std::sqrt(1.0 - sched.alpha_bar(t));
    const double inv_scale = 1.0 / std::sqrt(1.0 - beta);
    const bool noisy = t > 1;
    if (noisy) require_same_shape(z, x_t, "ddpm_step noise");
    const double sigma = noisy ? std::sqrt(posterior_variance(sched, t, t - 1)) : 0.0;

    ImageTensor out(x_t.height(), x_t.width(), x_t.channels());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = inv_scale * (x_t[i] - eps_coef * eps_hat[i]);
        if (noisy) out[i] += sigma * z[i];
    }
    return out;
}

DdimResult ddim_step(const DenoiserFn& model, const ImageTensor& x_t, const ImageTensor& cond, int t_hi,
                     int t_lo, double eta, const ImageTensor& z, const NoiseSchedule& sched) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in [0, 1]");
    if (t_lo < 0 || t_hi > sched.steps() || t_lo >= t_hi) {
        throw std::invalid_argument("ddim_step requires 0 <= t_lo < t_hi <= T");
    }
    const double ab_lo = sched.alpha_bar(t_lo);
    const double sigma2 = eta * posterior_variance(sched, t_hi, t_lo);
    double dir2 = 1.0 - ab_lo - sigma2;
    if (dir2 < 0.0) {
        // Rounding can push an exact zero slightly negative.
        if (dir2 < -1e-12) throw std::domain_error("1 - alpha_bar_lo - sigma^2 is negative");
        dir2 = 0.0;
    }
    const bool noisy = t_lo > 0 && sigma2 > 0.0;
    if (noisy) require_same_shape(z, x_t, "ddim_step noise");

    const ImageTensor eps_hat = evaluate_model(model, x_t, cond, t_hi);
    DdimResult result{ImageTensor(x_t.height(), x_t.width(), x_t.channels()), predict_x0(x_t, eps_hat, t_hi, sched)};

    const double signal = std::sqrt(ab_lo);
    const double dir = std::sqrt(dir2);
    const double sigma = std::sqrt(sigma2);
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        double v = signal * result.x0_hat[i] + dir * eps_hat[i];
        if (noisy) v += sigma * z[i];
        result.x_next[i] = v;
    }
    return result;
}

ImageTensor sample_unclamped(const DenoiserFn& model, const ImageTensor& cond, const SamplingSequence& seq,
                             double eta, std::uint64_t seed, const NoiseSchedule& sched,
                             const StepObserver& observer) {
    if (seq.total_steps() != sched.steps()) {
        throw std::invalid_argument("sampling sequence built for T=" + std::to_string(seq.total_steps()) +
                                    " but schedule has T=" + std::to_string(sched.steps()));
    }
    Rng rng(seed);
    ImageTensor x = gaussian_like(cond.height(), cond.width(), cond.channels(), rng);
    const auto steps = seq.steps();
    const ImageTensor no_noise;
    for (std::size_t i = 0; i + 1 < steps.size(); ++i) {
        const int t_hi = steps[i];
        const int t_lo = steps[i + 1];
        const bool noisy = eta > 0.0 && t_lo > 0;
        const ImageTensor z = noisy ? gaussian_like(x.height(), x.width(), x.channels(), rng) : no_noise;
        DdimResult r = ddim_step(model, x, cond, t_hi, t_lo, eta, z, sched);
        if (observer) observer(t_hi, t_lo, r.x0_hat);
        x = std::move(r.x_next);
    }
    return x;
}

ImageTensor reverse_process(const DenoiserFn& model, const ImageTensor& cond, const SamplingSequence& seq,
                            double eta, std::uint64_t seed, const NoiseSchedule& sched) {
    return clamp(sample_unclamped(model, cond, seq, eta, seed, sched), -1.0, 1.0);
}

}  // namespace uwdiff
