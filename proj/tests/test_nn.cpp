#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gradcheck.hpp"
#include "uwdiff/nn/checkpoint.hpp"
#include "uwdiff/nn/denoiser.hpp"

using namespace uwdiff;
using namespace uwdiff::nn;
using testsupport::check_gradients;
using testsupport::GradReport;
using testsupport::random_tensor;
using testsupport::randomize;

namespace {

void require_small(const GradReport& r) {
    INFO("worst parameter: " << r.worst << " error " << r.max_error);
    CHECK(r.checked > 0);
    CHECK(r.max_error < 1e-4);
}

}  // namespace

// ---------------------------------------------------------------- gradients

TEST_CASE("conv2d gradients") {
    for (int k : {1, 3}) {
        for (bool bias : {true, false}) {
            Rng rng(100 + k);
            ParamStore store;
            const Conv2d conv = Conv2d::create(store, "conv", 3, 5, k, bias);
            randomize(store, rng);
            Tensor3 x = random_tensor(5, 4, 3, rng);
            require_small(check_gradients(
                store, x, [&] { return conv.forward(store, x); },
                [&](const Tensor3& gy, Gradients& g) { return conv.backward(store, x, gy, g); }, rng));
        }
    }
}

TEST_CASE("dense gradients") {
    Rng rng(101);
    ParamStore store;
    const Dense dense = Dense::create(store, "dense", 6, 4);
    randomize(store, rng);
    Tensor3 x = random_tensor(1, 1, 6, rng);
    require_small(check_gradients(
        store, x, [&] { return Tensor3(1, 1, 4, dense.forward(store, x.storage())); },
        [&](const Tensor3& gy, Gradients& g) { return Tensor3(1, 1, 6, dense.backward(store, x.storage(), gy.storage(), g)); },
        rng));
}

TEST_CASE("layer norm gradients") {
    Rng rng(102);
    ParamStore store;
    const LayerNorm ln = LayerNorm::create(store, "ln", 5);
    randomize(store, rng);
    Tensor3 x = random_tensor(3, 3, 5, rng);
    LayerNorm::Cache cache;
    require_small(check_gradients(
        store, x, [&] { LayerNorm::Cache c; return ln.forward(store, x, c); },
        [&](const Tensor3& gy, Gradients& g) {
            ln.forward(store, x, cache);
            return ln.backward(store, cache, gy, g);
        },
        rng));
}

TEST_CASE("channel attention gradients") {
    for (GateMode mode : {GateMode::Additive, GateMode::Multiplicative}) {
        for (int k : {1, 3, 5}) {
            Rng rng(103 + k);
            ParamStore store;
            const ChannelAttention att = ChannelAttention::create(store, "attn", 6, k, mode);
            randomize(store, rng);
            Tensor3 x = random_tensor(3, 4, 6, rng);
            ChannelAttention::Cache cache;
            require_small(check_gradients(
                store, x, [&] { ChannelAttention::Cache c; return att.forward(store, x, c); },
                [&](const Tensor3& gy, Gradients& g) {
                    att.forward(store, x, cache);
                    return att.backward(store, x, cache, gy, g);
                },
                rng));
        }
    }
}

TEST_CASE("feed-forward gradients") {
    Rng rng(104);
    ParamStore store;
    const FeedForward ff = FeedForward::create(store, "ff", 4, 2);
    randomize(store, rng);
    Tensor3 x = random_tensor(3, 3, 4, rng);
    FeedForward::Cache cache;
    require_small(check_gradients(
        store, x, [&] { FeedForward::Cache c; return ff.forward(store, x, c); },
        [&](const Tensor3& gy, Gradients& g) {
            ff.forward(store, x, cache);
            return ff.backward(store, x, cache, gy, g);
        },
        rng));
}

TEST_CASE("transformer block gradients") {
    for (GateMode mode : {GateMode::Additive, GateMode::Multiplicative}) {
        Rng rng(105);
        ParamStore store;
        const TransformerBlock block = TransformerBlock::create(store, "block", 4, 3, mode, 2);
        randomize(store, rng);
        Tensor3 x = random_tensor(4, 3, 4, rng);
        TransformerBlock::Cache cache;
        require_small(check_gradients(
            store, x, [&] { TransformerBlock::Cache c; return block.forward(store, x, c); },
            [&](const Tensor3& gy, Gradients& g) {
                block.forward(store, x, cache);
                return block.backward(store, cache, gy, g);
            },
            rng));
    }
}

TEST_CASE("stem gradients") {
    Rng rng(106);
    ParamStore store;
    const Stem stem = Stem::create(store, "stem", 4, 8);
    randomize(store, rng);
    Tensor3 x = random_tensor(4, 4, 3, rng);
    const Tensor3 cond = random_tensor(4, 4, 3, rng);
    Stem::Cache cache;
    require_small(check_gradients(
        store, x, [&] { Stem::Cache c; return stem.forward(store, x, cond, 17, c); },
        [&](const Tensor3& gy, Gradients& g) {
            stem.forward(store, x, cond, 17, cache);
            stem.backward(store, cache, gy, g);
            return Tensor3();
        },
        rng));
}

TEST_CASE("pool and upsample gradients") {
    Rng rng(107);
    ParamStore empty;
    Tensor3 x = random_tensor(4, 6, 2, rng);
    require_small(check_gradients(
        empty, x, [&] { return avg_pool2(x); },
        [&](const Tensor3& gy, Gradients&) { return avg_pool2_backward(gy); }, rng));
    require_small(check_gradients(
        empty, x, [&] { return upsample2(x); },
        [&](const Tensor3& gy, Gradients&) { return upsample2_backward(gy); }, rng));
}

TEST_CASE("full denoiser gradients on 8x8") {
    DenoiserConfig small;
    small.base_width = 4;
    small.time_dim = 8;
    require_small(testsupport::check_denoiser(small, 8, 8, 108));
    small.gate = GateMode::Multiplicative;
    require_small(testsupport::check_denoiser(small, 8, 8, 109));
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
    Rng rng(110);
    DenoiserConfig cfg;
    cfg.base_width = 4;
    Denoiser model(cfg);
    randomize(model.params(), rng);
    const Tensor3 x = random_tensor(8, 8, 3, rng);
    Activations act;
    model.forward(x, x, 5, &act);
    Gradients grads(model.params());
    model.backward(Tensor3(8, 8, 3, 0.0), act, grads);
    for (std::size_t id = 0; id < grads.size(); ++id) {
        for (double g : grads[id]) REQUIRE(g == 0.0);
    }
}

TEST_CASE("backward before forward is rejected") {
    Denoiser model;
    model.initialize(1);
    Activations act;
    Gradients grads(model.params());
    CHECK_THROWS_AS(model.backward(Tensor3(8, 8, 3, 0.0), act, grads), std::logic_error);
}

// ------------------------------------------------------------ layer oracles

TEST_CASE("layer norm normalizes each pixel") {
    Rng rng(111);
    ParamStore store;
    const LayerNorm ln = LayerNorm::create(store, "ln", 7);
    randomize(store, rng);
    const Tensor3 x = random_tensor(5, 5, 7, rng, -4.0, 4.0);
    LayerNorm::Cache cache;
    ln.forward(store, x, cache);
    for (int h = 0; h < 5; ++h) {
        for (int w = 0; w < 5; ++w) {
            double mean = 0.0, sq = 0.0;
            for (int c = 0; c < 7; ++c) mean += cache.normalized.at(h, w, c);
            mean /= 7;
            for (int c = 0; c < 7; ++c) sq += std::pow(cache.normalized.at(h, w, c) - mean, 2);
            CHECK(std::abs(mean) <= 1e-9);
            CHECK(std::abs(sq / 7 - 1.0) <= 1e-6);
        }
    }
    SUBCASE("constant input normalizes to zero") {
        const Tensor3 flat(2, 2, 7, 0.37);
        LayerNorm::Cache c;
        ln.forward(store, flat, c);
        for (double v : c.normalized.storage()) CHECK(std::abs(v) < 1e-12);
    }
}

TEST_CASE("channel attention matches explicit loops") {
    Rng rng(112);
    for (GateMode mode : {GateMode::Additive, GateMode::Multiplicative}) {
        ParamStore store;
        const int C = 6, k = 3;
        const ChannelAttention att = ChannelAttention::create(store, "attn", C, k, mode);
        randomize(store, rng, 1.0);
        const Tensor3 x = random_tensor(3, 5, C, rng);
        ChannelAttention::Cache cache;
        const Tensor3 y = att.forward(store, x, cache);

        const double* w = store.values(att.weight);
        const double b = store.values(att.bias)[0];
        std::vector<double> pooled(C, 0.0);
        for (int h = 0; h < 3; ++h)
            for (int ww = 0; ww < 5; ++ww)
                for (int c = 0; c < C; ++c) pooled[c] += x.at(h, ww, c) / 15.0;
        for (int c = 0; c < C; ++c) {
            double z = b;
            if (c - 1 >= 0) z += w[0] * pooled[c - 1];
            z += w[1] * pooled[c];
            if (c + 1 < C) z += w[2] * pooled[c + 1];
            const double s = 1.0 / (1.0 + std::exp(-z));
            for (int h = 0; h < 3; ++h) {
                for (int ww = 0; ww < 5; ++ww) {
                    const double expect = mode == GateMode::Additive ? x.at(h, ww, c) + s : x.at(h, ww, c) * s;
                    CHECK(y.at(h, ww, c) == doctest::Approx(expect).epsilon(1e-13));
                }
            }
        }
    }
    SUBCASE("zero weights give a one-half offset") {
        ParamStore store;
        const ChannelAttention att = ChannelAttention::create(store, "attn", 3, 3, GateMode::Additive);
        Tensor3 x(2, 2, 3);
        for (int c = 0; c < 3; ++c)
            for (int h = 0; h < 2; ++h)
                for (int w = 0; w < 2; ++w) x.at(h, w, c) = 0.1 * (c + 1);
        ChannelAttention::Cache cache;
        const Tensor3 y = att.forward(store, x, cache);
        for (int c = 0; c < 3; ++c) CHECK(cache.pooled[c] == doctest::Approx(0.1 * (c + 1)).epsilon(1e-15));
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == x[i] + 0.5);
    }
}

TEST_CASE("transformer block with zero weights on a constant 1x1x2 input") {
    // LN of a constant pixel is 0 -> attention adds sigmoid(0) = 0.5 ->
    // LN again gives 0 -> feed-forward of zeros with zero biases is 0.
    ParamStore store;
    const TransformerBlock block = TransformerBlock::create(store, "b", 2, 3, GateMode::Additive, 2);
    for (ParamId id : {block.norm1.gamma, block.norm2.gamma}) std::fill_n(store.values(id), 2, 1.0);
    const Tensor3 x(1, 1, 2, 0.8);
    TransformerBlock::Cache cache;
    const Tensor3 y = block.forward(store, x, cache);
    CHECK(y.at(0, 0, 0) == doctest::Approx(1.3).epsilon(1e-15));
    CHECK(y.at(0, 0, 1) == doctest::Approx(1.3).epsilon(1e-15));

    SUBCASE("feed-forward bias path") {
        store.values(block.feed_forward.project.bias)[0] = 0.25;
        store.values(block.feed_forward.project.bias)[1] = -0.5;
        store.values(block.feed_forward.expand.bias)[0] = 1.0;  // silu(1) * 0 weight contributes nothing
        const Tensor3 z = block.forward(store, x, cache);
        CHECK(z.at(0, 0, 0) == doctest::Approx(1.55).epsilon(1e-15));
        CHECK(z.at(0, 0, 1) == doctest::Approx(0.8).epsilon(1e-15));
    }
}

TEST_CASE("stem with an identity kernel reproduces the concatenated input") {
    ParamStore store;
    const Stem stem = Stem::create(store, "stem", 6, 8);
    double* w = store.values(stem.conv.weight);  // [k][k][in][out]
    for (int c = 0; c < 6; ++c) w[((1 * 3 + 1) * 6 + c) * 6 + c] = 1.0;
    Rng rng(113);
    const Tensor3 x = random_tensor(4, 4, 3, rng);
    const Tensor3 cond = random_tensor(4, 4, 3, rng);
    Stem::Cache cache;
    CHECK(stem.forward(store, x, cond, 9, cache) == concat_channels(x, cond));

    SUBCASE("all-zero parameters give zero features") {
        ParamStore zero;
        const Stem s = Stem::create(zero, "stem", 5, 8);
        Stem::Cache c;
        const Tensor3 y = s.forward(zero, x, cond, 9, c);
        for (double v : y.storage()) CHECK(v == 0.0);
    }
}

TEST_CASE("time embedding layout") {
    const auto e = timestep_embedding(7, 8);
    REQUIRE(e.size() == 8);
    for (int i = 0; i < 4; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / 4.0);
        CHECK(e[i] == doctest::Approx(std::sin(7 * freq)).epsilon(1e-14));
        CHECK(e[i + 4] == doctest::Approx(std::cos(7 * freq)).epsilon(1e-14));
    }
}

// --------------------------------------------------------------- denoiser

TEST_CASE("parameter count matches a per-layer tally") {
    for (int C : {4, 8, 16}) {
        const int T = 64, k = 3, m = 2;
        auto conv = [](int in, int out, int kk, bool bias) { return kk * kk * in * out + (bias ? out : 0); };
        auto block = [&](int w) { return 2 * w + (k + 1) + 2 * w + conv(w, m * w, 1, true) + conv(m * w, w, 1, true); };
        const long expected = conv(6, C, 3, true) + (T * C + C) + 2 * block(C) + 2 * block(2 * C) +
                              4 * block(4 * C) + conv(C, 2 * C, 1, true) + conv(2 * C, 4 * C, 1, true) +
                              conv(4 * C, 2 * C, 1, true) + conv(2 * C, C, 1, true) + conv(C, 3, 3, false);
        DenoiserConfig cfg;
        cfg.base_width = C;
        CHECK(Denoiser(cfg).params().scalar_count() == static_cast<std::size_t>(expected));
    }
    CHECK(Denoiser().params().scalar_count() == 85888);
}

TEST_CASE("denoiser shapes, zero head and determinism") {
    Denoiser model;
    model.initialize(5);
    Rng rng(114);
    for (auto [h, w] : {std::pair{4, 4}, std::pair{8, 12}, std::pair{16, 8}, std::pair{64, 64}}) {
        const Tensor3 x = random_tensor(h, w, 3, rng);
        const Tensor3 y = model.forward(x, x, 100);
        CHECK(y.same_shape(x));
        for (double v : y.storage()) REQUIRE(v == 0.0);
    }
    CHECK_THROWS_AS(model.forward(Tensor3(6, 8, 3), Tensor3(6, 8, 3), 1), ShapeError);
    CHECK_THROWS_AS(model.forward(Tensor3(8, 8, 3), Tensor3(4, 4, 3), 1), ShapeError);

    randomize(model.params(), rng, 0.2);
    const Tensor3 x = random_tensor(8, 8, 3, rng);
    Denoiser twin;
    twin.initialize(5);
    assign_params(twin.params(), model.params());
    CHECK(model.forward(x, x, 3) == twin.forward(x, x, 3));

    Denoiser a, b;
    a.initialize(77);
    b.initialize(77);
    for (std::size_t id = 0; id < a.params().size(); ++id) {
        CHECK(a.params().entry(id).values == b.params().entry(id).values);
    }
}

TEST_CASE("initialization statistics") {
    Denoiser model;
    model.initialize(3);
    const auto& p = model.params();
    const auto& w = p.entry(*p.find("block3.ff.expand.weight")).values;  // fan-in 64
    double sq = 0.0;
    for (double v : w) sq += v * v;
    CHECK(sq / w.size() == doctest::Approx(1.0 / 64).epsilon(0.1));
    for (double v : p.entry(*p.find("block3.norm1.gamma")).values) CHECK(v == 1.0);
    for (double v : p.entry(*p.find("block3.ff.expand.bias")).values) CHECK(v == 0.0);
    for (double v : p.entry(*p.find("head.weight")).values) CHECK(v == 0.0);
    CHECK_FALSE(p.find("head.bias").has_value());
}

TEST_CASE("golden forward checksums") {
    Denoiser model;
    model.initialize(2024);
    Rng rng(2025);
    randomize(model.params(), rng, 0.3);
    const Tensor3 x = random_tensor(8, 8, 3, rng);
    const Tensor3 c = random_tensor(8, 8, 3, rng);
    const Tensor3 y = model.forward(x, c, 1000);
    double sum = 0.0, abs_sum = 0.0;
    for (double v : y.storage()) {
        sum += v;
        abs_sum += std::abs(v);
    }
    // Recorded from this implementation; guards against silent numeric drift.
    CHECK(sum == doctest::Approx(-1914.3224058704848).epsilon(1e-9));
    CHECK(abs_sum == doctest::Approx(3052.3065549165567).epsilon(1e-9));
}

// ------------------------------------------------------------- checkpoints

TEST_CASE("checkpoint round trip") {
    Denoiser model;
    model.initialize(9);
    Rng rng(115);
    randomize(model.params(), rng, 0.3);
    std::stringstream buf;
    write_params(buf, model.params());
    const std::string bytes = buf.str();
    CHECK(bytes.substr(0, 4) == "UWDM");
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);

    std::stringstream in(bytes);
    const ParamStore loaded = read_params(in);
    REQUIRE(loaded.size() == model.params().size());
    for (std::size_t id = 0; id < loaded.size(); ++id) {
        const auto& a = model.params().entry(id);
        const auto& b = loaded.entry(id);
        CHECK(a.name == b.name);
        CHECK(a.shape == b.shape);
        for (std::size_t i = 0; i < a.values.size(); ++i) {
            REQUIRE(b.values[i] == static_cast<double>(static_cast<float>(a.values[i])));
        }
    }
    // A second pass through the container is lossless.
    std::stringstream again;
    write_params(again, loaded);
    CHECK(again.str() == bytes);

    CHECK(infer_config(loaded) == model.config());
}

TEST_CASE("checkpoint loader rejects malformed files") {
    Denoiser model;
    model.initialize(1);
    std::stringstream buf;
    write_params(buf, model.params());
    std::string bytes = buf.str();

    std::string bad_version = bytes;
    bad_version[4] = 2;
    std::stringstream v(bad_version);
    CHECK_THROWS_AS(read_params(v), CheckpointError);

    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    std::stringstream m(bad_magic);
    CHECK_THROWS_AS(read_params(m), CheckpointError);

    std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_params(truncated), CheckpointError);

    CHECK_THROWS_AS(load_params("/nonexistent/model.ckpt"), CheckpointError);

    DenoiserConfig other;
    other.base_width = 8;
    Denoiser small(other);
    CHECK_THROWS(assign_params(small.params(), model.params()));
}

TEST_CASE("checkpoint file round trip through load_denoiser") {
    const auto path = std::filesystem::temp_directory_path() / "uwdiff_test_nn.ckpt";
    DenoiserConfig cfg;
    cfg.base_width = 8;
    Denoiser model(cfg);
    model.initialize(4);
    Rng rng(116);
    randomize(model.params(), rng, 0.3);
    save_params(path, model.params());
    const Denoiser loaded = load_denoiser(path);
    CHECK(loaded.config() == cfg);
    const Tensor3 x = random_tensor(8, 8, 3, rng);
    const Denoiser reloaded = [&] {
        save_params(path, loaded.params());
        return load_denoiser(path);
    }();
    CHECK(loaded.forward(x, x, 50) == reloaded.forward(x, x, 50));
    std::filesystem::remove(path);
}
