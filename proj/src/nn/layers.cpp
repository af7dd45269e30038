#include "uwdiff/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

// Small products would otherwise go through Eigen's lazy coefficient path,
// whose summation order depends on buffer alignment. The packed GEMM kernel
// gives the same bits no matter where the tensors live.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>

namespace uwdiff::nn {

namespace {

void require_channels(const FeatureMap& x, int channels, const char* what) {
    if (x.channels() != channels) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(channels) + " channels, got " +
                         x.shape_string());
    }
}

}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double silu(double x) { return x * sigmoid(x); }

double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

std::vector<double> timestep_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("embedding dimension must be even");
    const int half = dim / 2;
    std::vector<double> emb(static_cast<std::size_t>(dim));
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        emb[i] = std::sin(t * freq);
        emb[half + i] = std::cos(t * freq);
    }
    return emb;
}

void init_fan_in(ParamStore& store, ParamId id, int fan_in, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    for (double& v : store.entry(id).values) v = normal(rng);
}

// ---------------------------------------------------------------- Conv2d

Conv2d Conv2d::create(ParamStore& store, const std::string& name, int in_ch, int out_ch, int kernel,
                      bool with_bias) {
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("conv kernel must be odd");
    Conv2d conv;
    conv.in_channels = in_ch;
    conv.out_channels = out_ch;
    conv.kernel = kernel;
    conv.weight = store.add(name + ".weight", {kernel, kernel, in_ch, out_ch});
    if (with_bias) conv.bias = store.add(name + ".bias", {out_ch});
    return conv;
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Patch matrix [pixels][k*k*in] for a same-padded convolution; rows follow
// the weight layout [k][k][in] so that conv = patches * weight.
RowMatrix im2col(const FeatureMap& x, int kernel) {
    const int H = x.height();
    const int W = x.width();
    const int C = x.channels();
    const int pad = kernel / 2;
    RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(H) * W, static_cast<Eigen::Index>(kernel) * kernel * C);
    for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
            double* row = cols.data() + (static_cast<std::size_t>(h) * W + w) * cols.cols();
            for (int kh = 0; kh < kernel; ++kh) {
                const int ih = h + kh - pad;
                if (ih < 0 || ih >= H) continue;
                for (int kw = 0; kw < kernel; ++kw) {
                    const int iw = w + kw - pad;
                    if (iw < 0 || iw >= W) continue;
                    const double* in = x.pixel(ih, iw);
                    std::copy(in, in + C, row + static_cast<std::size_t>(kh * kernel + kw) * C);
                }
            }
        }
    }
    return cols;
}

// Scatters patch-matrix gradients back onto the input grid.
FeatureMap col2im(const RowMatrix& cols, int H, int W, int C, int kernel) {
    const int pad = kernel / 2;
    FeatureMap x(H, W, C);
    for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
            const double* row = cols.data() + (static_cast<std::size_t>(h) * W + w) * cols.cols();
            for (int kh = 0; kh < kernel; ++kh) {
                const int ih = h + kh - pad;
                if (ih < 0 || ih >= H) continue;
                for (int kw = 0; kw < kernel; ++kw) {
                    const int iw = w + kw - pad;
                    if (iw < 0 || iw >= W) continue;
                    double* out = x.pixel(ih, iw);
                    const double* src = row + static_cast<std::size_t>(kh * kernel + kw) * C;
                    for (int k = 0; k < C; ++k) out[k] += src[k];
                }
            }
        }
    }
    return x;
}

ConstMatrixMap as_matrix(const FeatureMap& x) {
    return ConstMatrixMap(x.storage().data(), static_cast<Eigen::Index>(x.height()) * x.width(), x.channels());
}

MatrixMap as_matrix(FeatureMap& x) {
    return MatrixMap(x.storage().data(), static_cast<Eigen::Index>(x.height()) * x.width(), x.channels());
}

}  // namespace

FeatureMap Conv2d::forward(const ParamStore& store, const FeatureMap& x) const {
    require_channels(x, in_channels, "conv2d");
    const Eigen::Index fan_in = static_cast<Eigen::Index>(kernel) * kernel * in_channels;
    const ConstMatrixMap w(store.values(weight), fan_in, out_channels);
    FeatureMap y(x.height(), x.width(), out_channels);
    MatrixMap out = as_matrix(y);
    if (kernel == 1) {
        out.noalias() = as_matrix(x) * w;
    } else {
        out.noalias() = im2col(x, kernel) * w;
    }
    if (bias != kNoParam) {
        const Eigen::Map<const Eigen::RowVectorXd> b(store.values(bias), out_channels);
        out.rowwise() += b;
    }
    return y;
}

FeatureMap Conv2d::backward(const ParamStore& store, const FeatureMap& x, const FeatureMap& grad_out,
                            Gradients& grads, bool need_input_grad) const {
    require_channels(x, in_channels, "conv2d backward");
    require_channels(grad_out, out_channels, "conv2d backward");
    const Eigen::Index fan_in = static_cast<Eigen::Index>(kernel) * kernel * in_channels;
    const ConstMatrixMap w(store.values(weight), fan_in, out_channels);
    MatrixMap gw(grads.slot(weight), fan_in, out_channels);
    const ConstMatrixMap gy = as_matrix(grad_out);
    if (bias != kNoParam) {
        // Plain loop: a fixed summation order regardless of buffer alignment.
        double* gb = grads.slot(bias);
        for (Eigen::Index r = 0; r < gy.rows(); ++r) {
            for (int c = 0; c < out_channels; ++c) gb[c] += gy(r, c);
        }
    }
    if (kernel == 1) {
        gw.noalias() += as_matrix(x).transpose() * gy;
        if (!need_input_grad) return {};
        FeatureMap gx(x.height(), x.width(), in_channels);
        as_matrix(gx).noalias() = gy * w.transpose();
        return gx;
    }
    const RowMatrix cols = im2col(x, kernel);
    gw.noalias() += cols.transpose() * gy;
    if (!need_input_grad) return {};
    const RowMatrix gcols = gy * w.transpose();
    return col2im(gcols, x.height(), x.width(), in_channels, kernel);
}

// ----------------------------------------------------------------- Dense

Dense Dense::create(ParamStore& store, const std::string& name, int in, int out) {
    Dense d;
    d.in_features = in;
    d.out_features = out;
    d.weight = store.add(name + ".weight", {out, in});
    d.bias = store.add(name + ".bias", {out});
    return d;
}

std::vector<double> Dense::forward(const ParamStore& store, const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != in_features) throw ShapeError("dense: input length mismatch");
    const double* w = store.values(weight);
    const double* b = store.values(bias);
    std::vector<double> y(static_cast<std::size_t>(out_features));
    for (int o = 0; o < out_features; ++o) {
        double acc = b[o];
        const double* row = w + static_cast<std::size_t>(o) * in_features;
        for (int i = 0; i < in_features; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
    return y;
}

std::vector<double> Dense::backward(const ParamStore& store, const std::vector<double>& x,
                                    const std::vector<double>& grad_out, Gradients& grads) const {
    const double* w = store.values(weight);
    double* gw = grads.slot(weight);
    double* gb = grads.slot(bias);
    std::vector<double> gx(static_cast<std::size_t>(in_features), 0.0);
    for (int o = 0; o < out_features; ++o) {
        const double g = grad_out[o];
        gb[o] += g;
        double* grow = gw + static_cast<std::size_t>(o) * in_features;
        const double* row = w + static_cast<std::size_t>(o) * in_features;
        for (int i = 0; i < in_features; ++i) {
            grow[i] += g * x[i];
            gx[i] += g * row[i];
        }
    }
    return gx;
}

// ------------------------------------------------------------- LayerNorm

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, int channels) {
    LayerNorm ln;
    ln.channels = channels;
    ln.gamma = store.add(name + ".gamma", {channels});
    ln.beta = store.add(name + ".beta", {channels});
    return ln;
}

FeatureMap LayerNorm::forward(const ParamStore& store, const FeatureMap& x, Cache& cache) const {
    require_channels(x, channels, "layer_norm");
    const int H = x.height();
    const int W = x.width();
    const int C = channels;
    const double* g = store.values(gamma);
    const double* b = store.values(beta);
    cache.normalized = FeatureMap(H, W, C);
    cache.inv_std.assign(static_cast<std::size_t>(H) * W, 0.0);
    FeatureMap y(H, W, C);
    for (int h = 0; h < H; ++h) {
        for (int c = 0; c < W; ++c) {
            const double* in = x.pixel(h, c);
            double mean = 0.0;
            for (int k = 0; k < C; ++k) mean += in[k];
            mean /= C;
            double var = 0.0;
            for (int k = 0; k < C; ++k) var += (in[k] - mean) * (in[k] - mean);
            var /= C;
            const double inv = 1.0 / std::sqrt(var + eps);
            cache.inv_std[static_cast<std::size_t>(h) * W + c] = inv;
            double* n = cache.normalized.pixel(h, c);
            double* __restrict out = y.pixel(h, c);
            for (int k = 0; k < C; ++k) {
                n[k] = (in[k] - mean) * inv;
                out[k] = g[k] * n[k] + b[k];
            }
        }
    }
    return y;
}

FeatureMap LayerNorm::backward(const ParamStore& store, const Cache& cache, const FeatureMap& grad_out,
                               Gradients& grads) const {
    require_channels(grad_out, channels, "layer_norm backward");
    const int H = grad_out.height();
    const int W = grad_out.width();
    const int C = channels;
    const double* g = store.values(gamma);
    double* gg = grads.slot(gamma);
    double* gbeta = grads.slot(beta);
    FeatureMap gx(H, W, C);
    std::vector<double> gn(static_cast<std::size_t>(C));
    for (int h = 0; h < H; ++h) {
        for (int c = 0; c < W; ++c) {
            const double* gy = grad_out.pixel(h, c);
            const double* n = cache.normalized.pixel(h, c);
            double mean_gn = 0.0;
            double mean_gn_n = 0.0;
            for (int k = 0; k < C; ++k) {
                gg[k] += gy[k] * n[k];
                gbeta[k] += gy[k];
                gn[k] = gy[k] * g[k];
                mean_gn += gn[k];
                mean_gn_n += gn[k] * n[k];
            }
            mean_gn /= C;
            mean_gn_n /= C;
            const double inv = cache.inv_std[static_cast<std::size_t>(h) * W + c];
            double* out = gx.pixel(h, c);
            for (int k = 0; k < C; ++k) out[k] = inv * (gn[k] - mean_gn - n[k] * mean_gn_n);
        }
    }
    return gx;
}

// ------------------------------------------------------ ChannelAttention

ChannelAttention ChannelAttention::create(ParamStore& store, const std::string& name, int channels, int kernel,
                                          GateMode mode) {
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("attention kernel must be odd");
    ChannelAttention att;
    att.channels = channels;
    att.kernel = kernel;
    att.mode = mode;
    att.weight = store.add(name + ".weight", {kernel});
    att.bias = store.add(name + ".bias", {1});
    return att;
}

FeatureMap ChannelAttention::forward(const ParamStore& store, const FeatureMap& x, Cache& cache) const {
    require_channels(x, channels, "channel_attention");
    const int C = channels;
    const std::size_t pixels = static_cast<std::size_t>(x.height()) * x.width();
    cache.pooled.assign(static_cast<std::size_t>(C), 0.0);
    for (std::size_t p = 0; p < pixels; ++p) {
        const double* in = x.storage().data() + p * C;
        for (int k = 0; k < C; ++k) cache.pooled[k] += in[k];
    }
    for (double& v : cache.pooled) v /= static_cast<double>(pixels);

    const double* w = store.values(weight);
    const double b = store.values(bias)[0];
    const int half = kernel / 2;
    cache.gate.assign(static_cast<std::size_t>(C), 0.0);
    for (int k = 0; k < C; ++k) {
        double acc = b;
        for (int j = 0; j < kernel; ++j) {
            const int src = k + j - half;
            if (src >= 0 && src < C) acc += w[j] * cache.pooled[src];
        }
        cache.gate[k] = sigmoid(acc);
    }

    FeatureMap y(x.height(), x.width(), C);
    for (std::size_t p = 0; p < pixels; ++p) {
        const double* in = x.storage().data() + p * C;
        double* out = y.storage().data() + p * C;
        if (mode == GateMode::Additive) {
            for (int k = 0; k < C; ++k) out[k] = in[k] + cache.gate[k];
        } else {
            for (int k = 0; k < C; ++k) out[k] = in[k] * cache.gate[k];
        }
    }
    return y;
}

FeatureMap ChannelAttention::backward(const ParamStore& store, const FeatureMap& x, const Cache& cache,
                                      const FeatureMap& grad_out, Gradients& grads) const {
    require_channels(grad_out, channels, "channel_attention backward");
    const int C = channels;
    const std::size_t pixels = static_cast<std::size_t>(grad_out.height()) * grad_out.width();
    FeatureMap gx(grad_out.height(), grad_out.width(), C);

    // dL/dgate per channel, plus the direct path through x.
    std::vector<double> g_gate(static_cast<std::size_t>(C), 0.0);
    for (std::size_t p = 0; p < pixels; ++p) {
        const double* gy = grad_out.storage().data() + p * C;
        double* out = gx.storage().data() + p * C;
        if (mode == GateMode::Additive) {
            for (int k = 0; k < C; ++k) {
                g_gate[k] += gy[k];
                out[k] = gy[k];
            }
        } else {
            const double* in = x.storage().data() + p * C;
            for (int k = 0; k < C; ++k) {
                g_gate[k] += gy[k] * in[k];
                out[k] = gy[k] * cache.gate[k];
            }
        }
    }

    const double* w = store.values(weight);
    double* gw = grads.slot(weight);
    double* gb = grads.slot(bias);
    const int half = kernel / 2;
    std::vector<double> g_pooled(static_cast<std::size_t>(C), 0.0);
    for (int k = 0; k < C; ++k) {
        const double s = cache.gate[k];
        const double g_pre = g_gate[k] * s * (1.0 - s);
        gb[0] += g_pre;
        for (int j = 0; j < kernel; ++j) {
            const int src = k + j - half;
            if (src < 0 || src >= C) continue;
            gw[j] += g_pre * cache.pooled[src];
            g_pooled[src] += g_pre * w[j];
        }
    }
    const double inv_pixels = 1.0 / static_cast<double>(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
        double* out = gx.storage().data() + p * C;
        for (int k = 0; k < C; ++k) out[k] += g_pooled[k] * inv_pixels;
    }
    return gx;
}

// ----------------------------------------------------------- FeedForward

FeedForward FeedForward::create(ParamStore& store, const std::string& name, int channels, int mult) {
    FeedForward ff;
    ff.expand = Conv2d::create(store, name + ".expand", channels, channels * mult, 1, true);
    ff.project = Conv2d::create(store, name + ".project", channels * mult, channels, 1, true);
    return ff;
}

FeatureMap FeedForward::forward(const ParamStore& store, const FeatureMap& x, Cache& cache) const {
    cache.hidden = expand.forward(store, x);
    cache.gate = cache.hidden;
    cache.activated = cache.hidden;
    for (std::size_t i = 0; i < cache.hidden.size(); ++i) {
        cache.gate[i] = sigmoid(cache.hidden[i]);
        cache.activated[i] = cache.hidden[i] * cache.gate[i];
    }
    return project.forward(store, cache.activated);
}

FeatureMap FeedForward::backward(const ParamStore& store, const FeatureMap& x, const Cache& cache,
                                 const FeatureMap& grad_out, Gradients& grads) const {
    FeatureMap g = project.backward(store, cache.activated, grad_out, grads);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = cache.gate[i];
        g[i] *= s * (1.0 + cache.hidden[i] * (1.0 - s));
    }
    return expand.backward(store, x, g, grads);
}

// ------------------------------------------------------ TransformerBlock

TransformerBlock TransformerBlock::create(ParamStore& store, const std::string& name, int channels,
                                          int attn_kernel, GateMode mode, int ff_mult) {
    TransformerBlock block;
    block.norm1 = LayerNorm::create(store, name + ".norm1", channels);
    block.attention = ChannelAttention::create(store, name + ".attn", channels, attn_kernel, mode);
    block.norm2 = LayerNorm::create(store, name + ".norm2", channels);
    block.feed_forward = FeedForward::create(store, name + ".ff", channels, ff_mult);
    return block;
}

FeatureMap TransformerBlock::forward(const ParamStore& store, const FeatureMap& x, Cache& cache) const {
    cache.normed1 = norm1.forward(store, x, cache.norm1);
    cache.hidden = attention.forward(store, cache.normed1, cache.attention);
    cache.hidden += x;
    cache.normed2 = norm2.forward(store, cache.hidden, cache.norm2);
    FeatureMap out = feed_forward.forward(store, cache.normed2, cache.feed_forward);
    out += cache.hidden;
    return out;
}

FeatureMap TransformerBlock::backward(const ParamStore& store, const Cache& cache, const FeatureMap& grad_out,
                                      Gradients& grads) const {
    FeatureMap g_hidden = grad_out;
    g_hidden += norm2.backward(store, cache.norm2,
                               feed_forward.backward(store, cache.normed2, cache.feed_forward, grad_out, grads),
                               grads);
    FeatureMap g_x = g_hidden;
    g_x += norm1.backward(store, cache.norm1,
                          attention.backward(store, cache.normed1, cache.attention, g_hidden, grads), grads);
    return g_x;
}

// ------------------------------------------------------ resampling

FeatureMap avg_pool2(const FeatureMap& x) {
    if (x.height() % 2 != 0 || x.width() % 2 != 0) throw ShapeError("avg_pool2 needs even spatial dims");
    const int C = x.channels();
    FeatureMap y(x.height() / 2, x.width() / 2, C);
    for (int h = 0; h < y.height(); ++h) {
        for (int w = 0; w < y.width(); ++w) {
            double* out = y.pixel(h, w);
            const double* a = x.pixel(2 * h, 2 * w);
            const double* b = x.pixel(2 * h, 2 * w + 1);
            const double* c = x.pixel(2 * h + 1, 2 * w);
            const double* d = x.pixel(2 * h + 1, 2 * w + 1);
            for (int k = 0; k < C; ++k) out[k] = 0.25 * (a[k] + b[k] + c[k] + d[k]);
        }
    }
    return y;
}

FeatureMap avg_pool2_backward(const FeatureMap& grad_out) {
    const int C = grad_out.channels();
    FeatureMap gx(grad_out.height() * 2, grad_out.width() * 2, C);
    for (int h = 0; h < gx.height(); ++h) {
        for (int w = 0; w < gx.width(); ++w) {
            const double* g = grad_out.pixel(h / 2, w / 2);
            double* out = gx.pixel(h, w);
            for (int k = 0; k < C; ++k) out[k] = 0.25 * g[k];
        }
    }
    return gx;
}

FeatureMap upsample2(const FeatureMap& x) {
    const int C = x.channels();
    FeatureMap y(x.height() * 2, x.width() * 2, C);
    for (int h = 0; h < y.height(); ++h) {
        for (int w = 0; w < y.width(); ++w) {
            const double* in = x.pixel(h / 2, w / 2);
            double* out = y.pixel(h, w);
            for (int k = 0; k < C; ++k) out[k] = in[k];
        }
    }
    return y;
}

FeatureMap upsample2_backward(const FeatureMap& grad_out) {
    if (grad_out.height() % 2 != 0 || grad_out.width() % 2 != 0) {
        throw ShapeError("upsample2_backward needs even spatial dims");
    }
    const int C = grad_out.channels();
    FeatureMap gx(grad_out.height() / 2, grad_out.width() / 2, C);
    for (int h = 0; h < grad_out.height(); ++h) {
        for (int w = 0; w < grad_out.width(); ++w) {
            const double* g = grad_out.pixel(h, w);
            double* out = gx.pixel(h / 2, w / 2);
            for (int k = 0; k < C; ++k) out[k] += g[k];
        }
    }
    return gx;
}

}  // namespace uwdiff::nn
