#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "uwdiff/diffusion.hpp"
#include "uwdiff/nn/layers.hpp"

namespace uwdiff::nn {

struct DenoiserConfig {
    int base_width = 16;
    int time_dim = 64;
    int attn_kernel = 3;
    int ff_mult = 2;
    GateMode gate = GateMode::Additive;

    friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

/// Stem: conv3x3 over concat(x_t, cond) plus a dense projection of the
/// sinusoidal time embedding, broadcast over every pixel.
struct Stem {
    Conv2d conv;
    Dense time;
    int time_dim = 64;

    struct Cache {
        FeatureMap input;             // 6-channel concatenation
        std::vector<double> embedding;
    };

    static Stem create(ParamStore& store, const std::string& name, int width, int time_dim);

    FeatureMap forward(const ParamStore& store, const ImageTensor& x_t, const ImageTensor& cond, int t,
                       Cache& cache) const;
    void backward(const ParamStore& store, const Cache& cache, const FeatureMap& grad_out, Gradients& grads) const;
};

ImageTensor concat_channels(const ImageTensor& a, const ImageTensor& b);

/// Intermediate values of one denoiser forward pass, consumed by backward.
struct Activations {
    Stem::Cache stem;
    std::array<TransformerBlock::Cache, 8> blocks;
    std::array<FeatureMap, 8> block_outputs;
    FeatureMap pooled1, pooled2;  // inputs of the two channel-doubling convs
    bool valid = false;
};

/// U-shaped encoder/decoder of eight transformer blocks:
///   stem -> B1 [C] -> pool, 1x1 C->2C -> B2 [2C] -> pool, 1x1 2C->4C -> B3, B4 [4C]
///   -> B5 [4C] -> (+B3) B6 [4C] -> 1x1 4C->2C, upsample (+B2) B7 [2C]
///   -> 1x1 2C->C, upsample (+B1) B8 [C] -> bias-free conv3x3 head -> 3 channels.
/// A 1x1 conv commutes with nearest upsampling, so the decoder projects at
/// low resolution and upsamples afterwards.
class Denoiser {
public:
    explicit Denoiser(DenoiserConfig config = {});

    const DenoiserConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    /// Fan-in scaled normal weights, zero biases, unit layer-norm scales and
    /// a zero head so that the initial prediction is 0.
    void initialize(std::uint64_t seed);

    /// eps_hat for (x_t, cond, t). H and W must be divisible by 4.
    ImageTensor forward(const ImageTensor& x_t, const ImageTensor& cond, int t,
                        Activations* activations = nullptr) const;

    /// Accumulates dL/dtheta into `grads` given dL/d(eps_hat).
    void backward(const ImageTensor& grad_out, const Activations& activations, Gradients& grads) const;
    /// Same, writing into the parameter store's own gradient slots.
    void backward(const ImageTensor& grad_out, const Activations& activations);

    /// Adapter to the sampler's DenoiserFn. The denoiser must outlive it.
    DenoiserFn as_function() const;

private:
    DenoiserConfig config_;
    ParamStore params_;
    Stem stem_;
    std::array<TransformerBlock, 8> blocks_;
    Conv2d down1_, down2_, up1_, up2_;
    Conv2d head_;
};

}  // namespace uwdiff::nn
