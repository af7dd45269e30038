#include "uwdiff/nn/denoiser.hpp"

#include <stdexcept>

namespace uwdiff::nn {

ImageTensor concat_channels(const ImageTensor& a, const ImageTensor& b) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw ShapeError("concat: spatial mismatch " + a.shape_string() + " vs " + b.shape_string());
    }
    const int ca = a.channels();
    const int cb = b.channels();
    ImageTensor out(a.height(), a.width(), ca + cb);
    for (int h = 0; h < a.height(); ++h) {
        for (int w = 0; w < a.width(); ++w) {
            double* dst = out.pixel(h, w);
            const double* pa = a.pixel(h, w);
            const double* pb = b.pixel(h, w);
            for (int k = 0; k < ca; ++k) dst[k] = pa[k];
            for (int k = 0; k < cb; ++k) dst[ca + k] = pb[k];
        }
    }
    return out;
}

Stem Stem::create(ParamStore& store, const std::string& name, int width, int time_dim) {
    Stem stem;
    stem.time_dim = time_dim;
    stem.conv = Conv2d::create(store, name + ".conv", 6, width, 3, true);
    stem.time = Dense::create(store, name + ".time", time_dim, width);
    return stem;
}

FeatureMap Stem::forward(const ParamStore& store, const ImageTensor& x_t, const ImageTensor& cond, int t,
                         Cache& cache) const {
    if (x_t.channels() != 3 || !x_t.same_shape(cond)) {
        throw ShapeError("stem expects two HxWx3 images, got " + x_t.shape_string() + " and " +
                         cond.shape_string());
    }
    cache.input = concat_channels(x_t, cond);
    cache.embedding = timestep_embedding(t, time_dim);
    FeatureMap f = conv.forward(store, cache.input);
    const std::vector<double> e = time.forward(store, cache.embedding);
    const std::size_t pixels = static_cast<std::size_t>(f.height()) * f.width();
    const int C = f.channels();
    for (std::size_t p = 0; p < pixels; ++p) {
        double* px = f.storage().data() + p * C;
        for (int k = 0; k < C; ++k) px[k] += e[k];
    }
    return f;
}

void Stem::backward(const ParamStore& store, const Cache& cache, const FeatureMap& grad_out,
                    Gradients& grads) const {
    conv.backward(store, cache.input, grad_out, grads, false);
    const int C = grad_out.channels();
    std::vector<double> g_time(static_cast<std::size_t>(C), 0.0);
    const std::size_t pixels = static_cast<std::size_t>(grad_out.height()) * grad_out.width();
    for (std::size_t p = 0; p < pixels; ++p) {
        const double* g = grad_out.storage().data() + p * C;
        for (int k = 0; k < C; ++k) g_time[k] += g[k];
    }
    time.backward(store, cache.embedding, g_time, grads);
}

Denoiser::Denoiser(DenoiserConfig config) : config_(config) {
    const int c1 = config_.base_width;
    const int c2 = 2 * c1;
    const int c3 = 4 * c1;
    if (c1 < 1 || config_.time_dim < 2 || config_.ff_mult < 1) throw std::invalid_argument("bad denoiser config");
    stem_ = Stem::create(params_, "stem", c1, config_.time_dim);
    const std::array<int, 8> widths{c1, c2, c3, c3, c3, c3, c2, c1};
    for (int i = 0; i < 8; ++i) {
        blocks_[i] = TransformerBlock::create(params_, "block" + std::to_string(i + 1), widths[i],
                                              config_.attn_kernel, config_.gate, config_.ff_mult);
    }
    down1_ = Conv2d::create(params_, "down1", c1, c2, 1, true);
    down2_ = Conv2d::create(params_, "down2", c2, c3, 1, true);
    up1_ = Conv2d::create(params_, "up1", c3, c2, 1, true);
    up2_ = Conv2d::create(params_, "up2", c2, c1, 1, true);
    head_ = Conv2d::create(params_, "head", c1, 3, 3, false);
}

void Denoiser::initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& e : params_.entries()) std::fill(e.values.begin(), e.values.end(), 0.0);
    auto conv_init = [&](const Conv2d& conv) {
        init_fan_in(params_, conv.weight, conv.kernel * conv.kernel * conv.in_channels, rng);
    };
    conv_init(stem_.conv);
    init_fan_in(params_, stem_.time.weight, stem_.time.in_features, rng);
    for (const auto& block : blocks_) {
        std::fill_n(params_.values(block.norm1.gamma), block.norm1.channels, 1.0);
        std::fill_n(params_.values(block.norm2.gamma), block.norm2.channels, 1.0);
        init_fan_in(params_, block.attention.weight, block.attention.kernel, rng);
        conv_init(block.feed_forward.expand);
        conv_init(block.feed_forward.project);
    }
    conv_init(down1_);
    conv_init(down2_);
    conv_init(up1_);
    conv_init(up2_);
    // head stays zero
}

ImageTensor Denoiser::forward(const ImageTensor& x_t, const ImageTensor& cond, int t,
                              Activations* activations) const {
    if (x_t.height() % 4 != 0 || x_t.width() % 4 != 0) {
        throw ShapeError("denoiser needs H and W divisible by 4, got " + x_t.shape_string());
    }
    Activations local;
    Activations& act = activations ? *activations : local;
    act.valid = false;
    auto& out = act.block_outputs;
    auto& cache = act.blocks;

    FeatureMap f = stem_.forward(params_, x_t, cond, t, act.stem);
    out[0] = blocks_[0].forward(params_, f, cache[0]);

    act.pooled1 = avg_pool2(out[0]);
    out[1] = blocks_[1].forward(params_, down1_.forward(params_, act.pooled1), cache[1]);

    act.pooled2 = avg_pool2(out[1]);
    out[2] = blocks_[2].forward(params_, down2_.forward(params_, act.pooled2), cache[2]);
    out[3] = blocks_[3].forward(params_, out[2], cache[3]);
    out[4] = blocks_[4].forward(params_, out[3], cache[4]);

    f = out[4];
    f += out[2];
    out[5] = blocks_[5].forward(params_, f, cache[5]);

    f = upsample2(up1_.forward(params_, out[5]));
    f += out[1];
    out[6] = blocks_[6].forward(params_, f, cache[6]);

    f = upsample2(up2_.forward(params_, out[6]));
    f += out[0];
    out[7] = blocks_[7].forward(params_, f, cache[7]);

    ImageTensor eps_hat = head_.forward(params_, out[7]);
    act.valid = activations != nullptr;
    return eps_hat;
}

void Denoiser::backward(const ImageTensor& grad_out, const Activations& act, Gradients& grads) const {
    if (!act.valid) throw std::logic_error("denoiser backward called without a recorded forward pass");
    if (grads.size() != params_.size()) throw std::invalid_argument("gradient buffer layout mismatch");
    const auto& out = act.block_outputs;
    const auto& cache = act.blocks;

    FeatureMap g = head_.backward(params_, out[7], grad_out, grads);
    g = blocks_[7].backward(params_, cache[7], g, grads);
    FeatureMap g_out0 = g;
    FeatureMap g_out6 = up2_.backward(params_, out[6], upsample2_backward(g), grads);

    g = blocks_[6].backward(params_, cache[6], g_out6, grads);
    FeatureMap g_out1 = g;
    FeatureMap g_out5 = up1_.backward(params_, out[5], upsample2_backward(g), grads);

    g = blocks_[5].backward(params_, cache[5], g_out5, grads);
    FeatureMap g_out2 = g;
    g = blocks_[4].backward(params_, cache[4], g, grads);
    g = blocks_[3].backward(params_, cache[3], g, grads);
    g_out2 += g;

    g = blocks_[2].backward(params_, cache[2], g_out2, grads);
    g_out1 += avg_pool2_backward(down2_.backward(params_, act.pooled2, g, grads));

    g = blocks_[1].backward(params_, cache[1], g_out1, grads);
    g_out0 += avg_pool2_backward(down1_.backward(params_, act.pooled1, g, grads));

    g = blocks_[0].backward(params_, cache[0], g_out0, grads);
    stem_.backward(params_, act.stem, g, grads);
}

void Denoiser::backward(const ImageTensor& grad_out, const Activations& activations) {
    Gradients grads(params_);
    backward(grad_out, activations, grads);
    grads.accumulate_into(params_);
}

DenoiserFn Denoiser::as_function() const {
    return [this](const ImageTensor& x_t, const ImageTensor& cond, int t) { return forward(x_t, cond, t); };
}

}  // namespace uwdiff::nn
