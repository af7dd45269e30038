#include "uwdiff/analytic_oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace uwdiff {

GaussianPrior GaussianPrior::constant(double mu0, double sigma0) {
    if (!(sigma0 > 0.0)) throw std::invalid_argument("sigma0 must be positive");
    return {Mean::Constant, mu0, sigma0};
}

GaussianPrior GaussianPrior::from_condition(double sigma0) {
    if (!(sigma0 > 0.0)) throw std::invalid_argument("sigma0 must be positive");
    return {Mean::Condition, 0.0, sigma0};
}

double posterior_mean_x0(double x_t, double mu0, double sigma0, double alpha_bar) {
    const double var0 = sigma0 * sigma0;
    const double signal = std::sqrt(alpha_bar);
    const double gain = signal * var0 / (alpha_bar * var0 + 1.0 - alpha_bar);
    return mu0 + gain * (x_t - signal * mu0);
}

ImageTensor optimal_eps(const ImageTensor& x_t, const ImageTensor& cond, int t, const GaussianPrior& prior,
                        const NoiseSchedule& sched) {
    if (t < 1 || t > sched.steps()) throw std::out_of_range("optimal_eps needs 1 <= t <= T");
    if (!(prior.sigma0 > 0.0)) throw std::invalid_argument("sigma0 must be positive");
    const bool from_cond = prior.mean_source == GaussianPrior::Mean::Condition;
    if (from_cond) require_same_shape(x_t, cond, "optimal_eps condition");

    const double ab = sched.alpha_bar(t);
    const double signal = std::sqrt(ab);
    const double inv_noise = 1.0 / std::sqrt(1.0 - ab);
    ImageTensor eps(x_t.height(), x_t.width(), x_t.channels());
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double mu0 = from_cond ? cond[i] : prior.mean;
        const double x0 = posterior_mean_x0(x_t[i], mu0, prior.sigma0, ab);
        eps[i] = (x_t[i] - signal * x0) * inv_noise;
    }
    return eps;
}

DenoiserFn make_oracle_denoiser(GaussianPrior prior, NoiseSchedule sched) {
    return [prior, sched = std::move(sched)](const ImageTensor& x_t, const ImageTensor& cond, int t) {
        return optimal_eps(x_t, cond, t, prior, sched);
    };
}

}  // namespace uwdiff
