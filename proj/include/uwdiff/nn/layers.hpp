#pragma once

#include <string>
#include <vector>

#include "uwdiff/nn/params.hpp"
#include "uwdiff/random.hpp"
#include "uwdiff/tensor.hpp"

// Differentiable building blocks. Each layer is a small descriptor holding
// parameter ids into a ParamStore; forward passes fill a Cache that the
// matching backward consumes. Backward accumulates into a Gradients buffer
// and returns the gradient with respect to the layer input.
namespace uwdiff::nn {

inline constexpr ParamId kNoParam = static_cast<ParamId>(-1);

/// Same-padded, stride-1 k x k convolution. Weight layout [k][k][in][out].
struct Conv2d {
    ParamId weight = kNoParam;
    ParamId bias = kNoParam;  // kNoParam for a bias-free convolution
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1;

    static Conv2d create(ParamStore& store, const std::string& name, int in_ch, int out_ch, int kernel,
                         bool with_bias);

    FeatureMap forward(const ParamStore& store, const FeatureMap& x) const;
    /// Returns dL/dx, or an empty tensor when `need_input_grad` is false.
    FeatureMap backward(const ParamStore& store, const FeatureMap& x, const FeatureMap& grad_out, Gradients& grads,
                        bool need_input_grad = true) const;
};

/// y = W x + b with W stored [out][in].
struct Dense {
    ParamId weight = kNoParam;
    ParamId bias = kNoParam;
    int in_features = 0;
    int out_features = 0;

    static Dense create(ParamStore& store, const std::string& name, int in, int out);

    std::vector<double> forward(const ParamStore& store, const std::vector<double>& x) const;
    std::vector<double> backward(const ParamStore& store, const std::vector<double>& x,
                                 const std::vector<double>& grad_out, Gradients& grads) const;
};

/// Normalizes each pixel's channel vector, then applies per-channel scale/shift.
struct LayerNorm {
    ParamId gamma = kNoParam;
    ParamId beta = kNoParam;
    int channels = 0;
    double eps = 1e-7;

    struct Cache {
        FeatureMap normalized;             // before the affine transform
        std::vector<double> inv_std;       // one per pixel
    };

    static LayerNorm create(ParamStore& store, const std::string& name, int channels);

    FeatureMap forward(const ParamStore& store, const FeatureMap& x, Cache& cache) const;
    FeatureMap backward(const ParamStore& store, const Cache& cache, const FeatureMap& grad_out,
                        Gradients& grads) const;
};

enum class GateMode { Additive, Multiplicative };

/// Channel-wise attention: global average pool -> 1D conv across channels
/// -> sigmoid gate broadcast over space. Additive mode returns x + gate,
/// multiplicative mode x * gate.
struct ChannelAttention {
    ParamId weight = kNoParam;  // [kernel]
    ParamId bias = kNoParam;    // [1]
    int channels = 0;
    int kernel = 3;
    GateMode mode = GateMode::Additive;

    struct Cache {
        std::vector<double> pooled;
        std::vector<double> gate;  // sigmoid output per channel
    };

    static ChannelAttention create(ParamStore& store, const std::string& name, int channels, int kernel,
                                   GateMode mode);

    FeatureMap forward(const ParamStore& store, const FeatureMap& x, Cache& cache) const;
    FeatureMap backward(const ParamStore& store, const FeatureMap& x, const Cache& cache,
                        const FeatureMap& grad_out, Gradients& grads) const;
};

/// Pointwise C -> mult*C, SiLU, pointwise mult*C -> C.
struct FeedForward {
    Conv2d expand;
    Conv2d project;

    struct Cache {
        FeatureMap hidden;     // pre-activation
        FeatureMap gate;       // sigmoid(hidden)
        FeatureMap activated;  // hidden * gate
    };

    static FeedForward create(ParamStore& store, const std::string& name, int channels, int mult);

    FeatureMap forward(const ParamStore& store, const FeatureMap& x, Cache& cache) const;
    FeatureMap backward(const ParamStore& store, const FeatureMap& x, const Cache& cache,
                        const FeatureMap& grad_out, Gradients& grads) const;
};

/// out = FF(LN2(h)) + h,  h = Att(LN1(x)) + x
struct TransformerBlock {
    LayerNorm norm1;
    ChannelAttention attention;
    LayerNorm norm2;
    FeedForward feed_forward;

    struct Cache {
        LayerNorm::Cache norm1;
        FeatureMap normed1;
        ChannelAttention::Cache attention;
        FeatureMap hidden;
        LayerNorm::Cache norm2;
        FeatureMap normed2;
        FeedForward::Cache feed_forward;
    };

    static TransformerBlock create(ParamStore& store, const std::string& name, int channels, int attn_kernel,
                                   GateMode mode, int ff_mult);

    FeatureMap forward(const ParamStore& store, const FeatureMap& x, Cache& cache) const;
    FeatureMap backward(const ParamStore& store, const Cache& cache, const FeatureMap& grad_out,
                        Gradients& grads) const;
};

FeatureMap avg_pool2(const FeatureMap& x);
FeatureMap avg_pool2_backward(const FeatureMap& grad_out);
FeatureMap upsample2(const FeatureMap& x);
FeatureMap upsample2_backward(const FeatureMap& grad_out);

double sigmoid(double x);
double silu(double x);
double silu_grad(double x);

/// Sinusoidal encoding of a time step: sin(t w_i) for the first half,
/// cos(t w_i) for the second, w_i = 10000^(-i / (dim/2)).
std::vector<double> timestep_embedding(int t, int dim);

/// Fills a parameter with N(0, 1/fan_in) samples.
void init_fan_in(ParamStore& store, ParamId id, int fan_in, Rng& rng);

}  // namespace uwdiff::nn
