#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "uwdiff/metrics.hpp"
#include "uwdiff/tensor.hpp"

namespace uwdiff {

/// Synthetic underwater degradation. Gains act on [0, 1] intensities, haze
/// color is given in the normalized [-1, 1] image range.
struct DegradationParams {
    std::array<double, 3> gains{1.0, 1.0, 1.0};
    double blur_sigma = 0.0;
    double noise_sigma = 0.0;
    std::array<double, 3> haze_color{0.0, 0.0, 0.0};
    double haze_weight = 0.0;

    /// Blue-green cast, mild blur and haze, light sensor noise.
    static DegradationParams underwater();
    void validate() const;
};

/// Procedural clean image: smooth random color gradient plus 3-8 solid shapes.
ImageTensor make_clean(std::uint64_t seed, int height, int width);

/// gain -> Gaussian blur (radius ceil(3 sigma), clamped edges) -> haze blend
/// -> additive Gaussian noise -> clamp to [-1, 1].
ImageTensor degrade(const ImageTensor& clean, const DegradationParams& params, std::uint64_t seed);

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 8-bit RGB PNG.
Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& img);

ImageTensor load_image(const std::filesystem::path& path);
void save_image(const ImageTensor& img, const std::filesystem::path& path);

struct ImagePair {
    ImageTensor clean;
    ImageTensor degraded;
};

struct CorpusSpec {
    std::uint64_t seed = 2023;
    int image_size = 64;
    int train_count = 512;
    int val_count = 32;
    int test_count = 16;
    DegradationParams degradation = DegradationParams::underwater();
};

enum class Split { Train, Val, Test };
std::string split_name(Split split);

/// Deterministic pair `index` of `split`; every pair has its own derived seed.
ImagePair make_pair(const CorpusSpec& spec, Split split, int index);

/// Writes root/<split>/{input,gt}/NNNN.png plus root/manifest.txt.
/// The directory must be absent or empty.
void write_corpus(const std::filesystem::path& root, const CorpusSpec& spec);

/// Reads every pair of one split, ordered by id.
std::vector<ImagePair> load_split(const std::filesystem::path& root, Split split);

std::string pair_file_name(int index);

}  // namespace uwdiff
