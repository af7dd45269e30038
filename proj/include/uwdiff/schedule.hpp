#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace uwdiff {

/// Variance schedule beta_1..beta_T together with the cumulative products
/// alpha_bar[t] = prod_{i<=t} (1 - beta_i), alpha_bar[0] = 1.
class NoiseSchedule {
public:
    /// Takes beta_1..beta_T. Each entry must lie strictly inside (0, 1).
    explicit NoiseSchedule(std::vector<double> betas);

    int steps() const { return static_cast<int>(beta_.size()); }

    /// beta_t for t in [1, T].
    double beta(int t) const;
    /// alpha_bar_t for t in [0, T].
    double alpha_bar(int t) const;

    std::span<const double> betas() const { return beta_; }
    std::span<const double> alpha_bars() const { return alpha_bar_; }

private:
    std::vector<double> beta_;
    std::vector<double> alpha_bar_;
};

inline constexpr double kDefaultBetaMin = 1e-6;
inline constexpr double kDefaultBetaMax = 1e-2;

NoiseSchedule linear_beta_schedule(int steps, double beta_min = kDefaultBetaMin, double beta_max = kDefaultBetaMax);

/// sigma^2 for a reverse jump t_hi -> t_lo:
///   (1 - ab_lo) / (1 - ab_hi) * (1 - ab_hi / ab_lo).
/// For adjacent steps this is the DDPM posterior variance tilde-beta_t.
double posterior_variance(const NoiseSchedule& sched, int t_hi, int t_lo);

/// Strictly decreasing time-step list starting at T and ending at 0.
class SamplingSequence {
public:
    /// Throws std::invalid_argument if `steps` is not legal for `total_steps`.
    SamplingSequence(std::vector<int> steps, int total_steps);

    std::span<const int> steps() const { return steps_; }
    int total_steps() const { return total_steps_; }
    std::size_t size() const { return steps_.size(); }
    int operator[](std::size_t i) const { return steps_[i]; }

    /// Number of denoiser evaluations the sequence costs.
    std::size_t jumps() const { return steps_.size() - 1; }

    std::string to_string() const;

    friend bool operator==(const SamplingSequence&, const SamplingSequence&) = default;

private:
    std::vector<int> steps_;
    int total_steps_;
};

bool validate_sequence(std::span<const int> steps, int total_steps);

SamplingSequence uniform_sequence(int total_steps, int jumps);

/// Stride d1 over [lo, mid] and d2 over [mid, hi], merged at mid.
/// Only lo = 0 and hi = T yields an inference-ready sequence; other spans
/// are returned through piecewise_steps.
std::vector<int> piecewise_steps(int lo, int mid, int hi, int dense_stride, int sparse_stride);
SamplingSequence piecewise_sequence(int total_steps, int mid, int dense_stride, int sparse_stride);

/// "2000,1800,...,0" -> steps. Throws on malformed text or illegal sequence.
SamplingSequence parse_sequence(std::string_view text, int total_steps);

}  // namespace uwdiff
