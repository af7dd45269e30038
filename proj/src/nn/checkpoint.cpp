#include "uwdiff/nn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace uwdiff::nn {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw CheckpointError("truncated checkpoint");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_params(std::ostream& out, const ParamStore& store) {
    out.write(kCheckpointMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(store.size()));
    for (const auto& e : store.entries()) {
        put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
        for (int d : e.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : e.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    if (!out) throw CheckpointError("failed writing checkpoint");
}

ParamStore read_params(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw CheckpointError("bad checkpoint magic");
    }
    const std::uint32_t version = get_u32(in);
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t count = get_u32(in);
    ParamStore store;
    for (std::uint32_t p = 0; p < count; ++p) {
        const std::uint32_t name_len = get_u32(in);
        if (name_len > 4096) throw CheckpointError("implausible parameter name length");
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw CheckpointError("truncated checkpoint");
        const std::uint32_t rank = get_u32(in);
        if (rank > 8) throw CheckpointError("implausible parameter rank for " + name);
        std::vector<int> shape(rank);
        for (auto& d : shape) {
            const std::uint32_t dim = get_u32(in);
            if (dim == 0 || dim > (1u << 24)) throw CheckpointError("implausible dimension in " + name);
            d = static_cast<int>(dim);
        }
        const ParamId id = store.add(name, shape);
        for (double& v : store.entry(id).values) v = std::bit_cast<float>(get_u32(in));
    }
    return store;
}

void save_params(const std::filesystem::path& path, const ParamStore& store) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
    write_params(out, store);
}

ParamStore load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    return read_params(in);
}

void assign_params(ParamStore& target, const ParamStore& source) {
    if (target.size() != source.size()) {
        throw CheckpointError("checkpoint has " + std::to_string(source.size()) + " parameters, model expects " +
                              std::to_string(target.size()));
    }
    for (const auto& src : source.entries()) {
        const auto id = target.find(src.name);
        if (!id) throw CheckpointError("unexpected parameter " + src.name);
        auto& dst = target.entry(*id);
        if (dst.shape != src.shape) throw CheckpointError("shape mismatch for " + src.name);
        dst.values = src.values;
    }
}

DenoiserConfig infer_config(const ParamStore& store, GateMode gate) {
    auto shape_of = [&](const std::string& name) -> const std::vector<int>& {
        const auto id = store.find(name);
        if (!id) throw CheckpointError("checkpoint lacks " + name);
        return store.entry(*id).shape;
    };
    DenoiserConfig cfg;
    cfg.gate = gate;
    const auto& time_w = shape_of("stem.time.weight");  // [width][time_dim]
    if (time_w.size() != 2) throw CheckpointError("stem.time.weight must be rank 2");
    cfg.base_width = time_w[0];
    cfg.time_dim = time_w[1];
    const auto& attn = shape_of("block1.attn.weight");
    if (attn.size() != 1) throw CheckpointError("block1.attn.weight must be rank 1");
    cfg.attn_kernel = attn[0];
    const auto& expand = shape_of("block1.ff.expand.weight");  // [1][1][C][mult*C]
    if (expand.size() != 4 || expand[3] % cfg.base_width != 0) throw CheckpointError("bad block1.ff.expand shape");
    cfg.ff_mult = expand[3] / cfg.base_width;
    return cfg;
}

Denoiser load_denoiser(const std::filesystem::path& path, GateMode gate) {
    const ParamStore loaded = load_params(path);
    Denoiser model(infer_config(loaded, gate));
    assign_params(model.params(), loaded);
    return model;
}

}  // namespace uwdiff::nn
