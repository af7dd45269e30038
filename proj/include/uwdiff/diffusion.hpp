#pragma once

#include <cstdint>
#include <functional>

#include "uwdiff/schedule.hpp"
#include "uwdiff/tensor.hpp"

namespace uwdiff {

/// Noise predictor eps_hat = f(x_t, c, t). Must return a tensor shaped like x_t
/// and be deterministic for fixed inputs.
using DenoiserFn = std::function<ImageTensor(const ImageTensor& x_t, const ImageTensor& cond, int t)>;

/// sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps
ImageTensor q_sample(const ImageTensor& x0, int t, const ImageTensor& eps, const NoiseSchedule& sched);

/// Mean absolute error between eps and model(q_sample(x0, t, eps), cond, t).
double training_loss(const DenoiserFn& model, const ImageTensor& x0, const ImageTensor& cond, int t,
                     const ImageTensor& eps, const NoiseSchedule& sched);

/// x0 estimate implied by a noise prediction at step t.
ImageTensor predict_x0(const ImageTensor& x_t, const ImageTensor& eps_hat, int t, const NoiseSchedule& sched);

/// One ancestral step t -> t-1. `z` is ignored at t = 1.
ImageTensor ddpm_step(const DenoiserFn& model, const ImageTensor& x_t, const ImageTensor& cond, int t,
                      const ImageTensor& z, const NoiseSchedule& sched);

struct DdimResult {
    ImageTensor x_next;
    ImageTensor x0_hat;
};

/// Skip step t_hi -> t_lo with sigma^2 = eta * posterior_variance(t_hi, t_lo).
/// `z` may be empty when eta = 0 or t_lo = 0; otherwise it must match x_t.
DdimResult ddim_step(const DenoiserFn& model, const ImageTensor& x_t, const ImageTensor& cond, int t_hi,
                     int t_lo, double eta, const ImageTensor& z, const NoiseSchedule& sched);

/// Observer called after every skip step with (t_hi, t_lo, x0_hat).
using StepObserver = std::function<void(int t_hi, int t_lo, const ImageTensor& x0_hat)>;

/// Reverse process without the final clamp. x_T is drawn from N(0, I) with
/// the seeded generator; step noise is drawn from the same stream only when
/// a step is stochastic.
ImageTensor sample_unclamped(const DenoiserFn& model, const ImageTensor& cond, const SamplingSequence& seq,
                             double eta, std::uint64_t seed, const NoiseSchedule& sched,
                             const StepObserver& observer = {});

/// Full reverse process; the result is clamped to [-1, 1].
ImageTensor reverse_process(const DenoiserFn& model, const ImageTensor& cond, const SamplingSequence& seq,
                            double eta, std::uint64_t seed, const NoiseSchedule& sched);

}  // namespace uwdiff
