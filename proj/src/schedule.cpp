#include "uwdiff/schedule.hpp"

#include <charconv>
#include <stdexcept>

namespace uwdiff {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
    if (beta_.empty()) throw std::invalid_argument("noise schedule needs at least one step");
    alpha_bar_.resize(beta_.size() + 1);
    alpha_bar_[0] = 1.0;
    for (std::size_t i = 0; i < beta_.size(); ++i) {
        if (!(beta_[i] > 0.0 && beta_[i] < 1.0)) {
            throw std::invalid_argument("beta must lie in (0, 1)");
        }
        alpha_bar_[i + 1] = alpha_bar_[i] * (1.0 - beta_[i]);
    }
}

double NoiseSchedule::beta(int t) const {
    if (t < 1 || t > steps()) throw std::out_of_range("beta index " + std::to_string(t));
    return beta_[static_cast<std::size_t>(t) - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > steps()) throw std::out_of_range("alpha_bar index " + std::to_string(t));
    return alpha_bar_[static_cast<std::size_t>(t)];
}

NoiseSchedule linear_beta_schedule(int steps, double beta_min, double beta_max) {
    if (steps < 1) throw std::invalid_argument("schedule length must be >= 1");
    if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
        throw std::invalid_argument("beta bounds must satisfy 0 < min <= max < 1");
    }
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int t = 1; t <= steps; ++t) {
        betas[t - 1] = steps == 1 ? beta_min
                                  : beta_min + (t - 1) * (beta_max - beta_min) / (steps - 1);
    }
    // Pin the upper endpoint against rounding in the interpolation.
    betas.back() = steps == 1 ? beta_min : beta_max;
    return NoiseSchedule(std::move(betas));
}

double posterior_variance(const NoiseSchedule& sched, int t_hi, int t_lo) {
    if (t_lo < 0 || t_hi > sched.steps() || t_lo >= t_hi) {
        throw std::invalid_argument("posterior_variance requires 0 <= t_lo < t_hi <= T");
    }
    const double ab_hi = sched.alpha_bar(t_hi);
    const double ab_lo = sched.alpha_bar(t_lo);
    return (1.0 - ab_lo) / (1.0 - ab_hi) * (1.0 - ab_hi / ab_lo);
}

bool validate_sequence(std::span<const int> steps, int total_steps) {
    if (steps.size() < 2) return false;
    if (steps.front() != total_steps || steps.back() != 0) return false;
    for (std::size_t i = 1; i < steps.size(); ++i) {
        if (steps[i] >= steps[i - 1]) return false;
    }
    return true;
}

SamplingSequence::SamplingSequence(std::vector<int> steps, int total_steps)
    : steps_(std::move(steps)), total_steps_(total_steps) {
    if (!validate_sequence(steps_, total_steps_)) {
        throw std::invalid_argument("illegal sampling sequence for T=" + std::to_string(total_steps_) +
                                    ": " + to_string());
    }
}

std::string SamplingSequence::to_string() const {
    std::string out;
    for (std::size_t i = 0; i < steps_.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(steps_[i]);
    }
    return out;
}

SamplingSequence uniform_sequence(int total_steps, int jumps) {
    if (jumps < 1 || total_steps < 1) throw std::invalid_argument("uniform_sequence needs S >= 1");
    if (total_steps % jumps != 0) {
        throw std::invalid_argument("S=" + std::to_string(jumps) + " does not divide T=" +
                                    std::to_string(total_steps));
    }
    const int stride = total_steps / jumps;
    std::vector<int> steps;
    steps.reserve(static_cast<std::size_t>(jumps) + 1);
    for (int t = total_steps; t >= 0; t -= stride) steps.push_back(t);
    return SamplingSequence(std::move(steps), total_steps);
}

std::vector<int> piecewise_steps(int lo, int mid, int hi, int dense_stride, int sparse_stride) {
    if (!(lo < mid && mid < hi)) throw std::invalid_argument("piecewise needs lo < mid < hi");
    if (dense_stride < 1 || sparse_stride < 1) throw std::invalid_argument("strides must be >= 1");
    if ((mid - lo) % dense_stride != 0 || (hi - mid) % sparse_stride != 0) {
        throw std::invalid_argument("piecewise spans must be divisible by their strides");
    }
    std::vector<int> steps;
    for (int t = hi; t > mid; t -= sparse_stride) steps.push_back(t);
    for (int t = mid; t >= lo; t -= dense_stride) steps.push_back(t);
    return steps;
}

SamplingSequence piecewise_sequence(int total_steps, int mid, int dense_stride, int sparse_stride) {
    return SamplingSequence(piecewise_steps(0, mid, total_steps, dense_stride, sparse_stride),
                            total_steps);
}

SamplingSequence parse_sequence(std::string_view text, int total_steps) {
    std::vector<int> steps;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find(',', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view field = text.substr(pos, end - pos);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r' ||
                                  field.back() == '\n')) {
            field.remove_suffix(1);
        }
        int value = 0;
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
        if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
            throw std::invalid_argument("malformed sequence entry '" + std::string(field) + "'");
        }
        steps.push_back(value);
        pos = end + 1;
    }
    return SamplingSequence(std::move(steps), total_steps);
}

}  // namespace uwdiff
