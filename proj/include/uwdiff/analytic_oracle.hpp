#pragma once

#include "uwdiff/diffusion.hpp"

namespace uwdiff {

/// Independent Gaussian prior x0 ~ N(mu0, sigma0^2) per component. The mean
/// is either a constant or the condition image itself.
struct GaussianPrior {
    enum class Mean { Constant, Condition };

    Mean mean_source = Mean::Constant;
    double mean = 0.0;
    double sigma0 = 1.0;

    static GaussianPrior constant(double mu0, double sigma0);
    static GaussianPrior from_condition(double sigma0);
};

/// E[x0 | x_t] for the prior, given the component mean mu0.
double posterior_mean_x0(double x_t, double mu0, double sigma0, double alpha_bar);

/// Exact minimum-MSE noise prediction for the prior at step t >= 1.
ImageTensor optimal_eps(const ImageTensor& x_t, const ImageTensor& cond, int t, const GaussianPrior& prior,
                        const NoiseSchedule& sched);

/// Wraps optimal_eps in the DenoiserFn contract. The schedule is copied.
DenoiserFn make_oracle_denoiser(GaussianPrior prior, NoiseSchedule sched);

}  // namespace uwdiff
