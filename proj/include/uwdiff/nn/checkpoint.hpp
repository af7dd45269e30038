#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "uwdiff/nn/denoiser.hpp"

namespace uwdiff::nn {

// Checkpoint layout, all integers little-endian u32:
//   "UWDM" | version | entry count |
//   per entry: name length | name bytes | rank | dims... | values as f32 LE
inline constexpr char kCheckpointMagic[4] = {'U', 'W', 'D', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_params(std::ostream& out, const ParamStore& store);
/// Reads a checkpoint stream into a fresh store (values only, zero grads).
ParamStore read_params(std::istream& in);

void save_params(const std::filesystem::path& path, const ParamStore& store);
ParamStore load_params(const std::filesystem::path& path);

/// Copies values from `source` into `target`; names and shapes must match exactly.
void assign_params(ParamStore& target, const ParamStore& source);

/// Recovers the architecture from parameter shapes. The gate mode is not
/// stored and must be supplied.
DenoiserConfig infer_config(const ParamStore& store, GateMode gate = GateMode::Additive);

Denoiser load_denoiser(const std::filesystem::path& path, GateMode gate = GateMode::Additive);

}  // namespace uwdiff::nn
