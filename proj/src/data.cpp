#include "uwdiff/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "uwdiff/random.hpp"

namespace uwdiff {

namespace fs = std::filesystem;

DegradationParams DegradationParams::underwater() {
    DegradationParams p;
    p.gains = {0.45, 0.85, 0.75};
    p.blur_sigma = 1.2;
    p.haze_color = {-0.1, 0.25, 0.15};
    p.haze_weight = 0.25;
    p.noise_sigma = 0.01;
    return p;
}

void DegradationParams::validate() const {
    for (double g : gains) {
        if (!(g >= 0.0 && g <= 1.0)) throw std::invalid_argument("channel gains must lie in [0, 1]");
    }
    if (!(blur_sigma >= 0.0)) throw std::invalid_argument("blur sigma must be >= 0");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
    for (double h : haze_color) {
        if (!(h >= -1.0 && h <= 1.0)) throw std::invalid_argument("haze color must lie in [-1, 1]");
    }
    if (!(haze_weight >= 0.0 && haze_weight < 1.0)) throw std::invalid_argument("haze weight must lie in [0, 1)");
}

ImageTensor make_clean(std::uint64_t seed, int height, int width) {
    if (height <= 0 || width <= 0 || height % 4 != 0 || width % 4 != 0) {
        throw std::invalid_argument("image size must be positive and divisible by 4");
    }
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> frac(0.0, 1.0);

    // Bilinear blend of four random corner colors.
    std::array<std::array<double, 3>, 4> corners{};
    for (auto& corner : corners) {
        for (double& v : corner) v = unit(rng);
    }
    ImageTensor img(height, width, 3);
    for (int h = 0; h < height; ++h) {
        const double fy = height > 1 ? static_cast<double>(h) / (height - 1) : 0.0;
        for (int w = 0; w < width; ++w) {
            const double fx = width > 1 ? static_cast<double>(w) / (width - 1) : 0.0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1 - fx) * corners[0][c] + fx * corners[1][c];
                const double bottom = (1 - fx) * corners[2][c] + fx * corners[3][c];
                img.at(h, w, c) = (1 - fy) * top + fy * bottom;
            }
        }
    }

    const int shapes = std::uniform_int_distribution<int>(3, 8)(rng);
    for (int s = 0; s < shapes; ++s) {
        const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
        std::array<double, 3> color{};
        for (double& v : color) v = unit(rng);
        // Push one channel to an extreme so the full range gets used.
        color[std::uniform_int_distribution<int>(0, 2)(rng)] = frac(rng) < 0.5 ? -1.0 : 1.0;
        const double cy = frac(rng) * height;
        const double cx = frac(rng) * width;
        const double ry = (0.08 + 0.22 * frac(rng)) * height;
        const double rx = (0.08 + 0.22 * frac(rng)) * width;
        for (int h = 0; h < height; ++h) {
            for (int w = 0; w < width; ++w) {
                const double dy = (h + 0.5 - cy) / ry;
                const double dx = (w + 0.5 - cx) / rx;
                bool inside = false;
                switch (kind) {
                    case 0: inside = dx * dx + dy * dy <= 1.0; break;                // ellipse
                    case 1: inside = std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0; break;  // rectangle
                    default: inside = dy >= -1.0 && dy <= 1.0 && std::abs(dx) <= (dy + 1.0) * 0.5; break;  // triangle
                }
                if (inside) {
                    for (int c = 0; c < 3; ++c) img.at(h, w, c) = color[c];
                }
            }
        }
    }
    return clamp(img, -1.0, 1.0);
}

namespace {

ImageTensor gaussian_blur(const ImageTensor& img, double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    if (radius < 1) return img;
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    const int H = img.height();
    const int W = img.width();
    const int C = img.channels();
    ImageTensor tmp(H, W, C);
    for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * img.at(h, std::clamp(w + k, 0, W - 1), c);
                tmp.at(h, w, c) = acc;
            }
        }
    }
    ImageTensor out(H, W, C);
    for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp.at(std::clamp(h + k, 0, H - 1), w, c);
                out.at(h, w, c) = acc;
            }
        }
    }
    return out;
}

}  // namespace

ImageTensor degrade(const ImageTensor& clean, const DegradationParams& params, std::uint64_t seed) {
    params.validate();
    if (clean.channels() != 3) throw std::invalid_argument("degrade expects an RGB image");
    ImageTensor img = clean;
    const std::size_t pixels = static_cast<std::size_t>(img.height()) * img.width();
    for (std::size_t p = 0; p < pixels; ++p) {
        for (int c = 0; c < 3; ++c) {
            if (params.gains[c] == 1.0) continue;  // keep unit gain bit-exact
            double& v = img[p * 3 + c];
            v = 2.0 * ((v + 1.0) * 0.5 * params.gains[c]) - 1.0;
        }
    }
    if (params.blur_sigma > 0.0) img = gaussian_blur(img, params.blur_sigma);
    if (params.haze_weight > 0.0) {
        const double w = params.haze_weight;
        for (std::size_t p = 0; p < pixels; ++p) {
            for (int c = 0; c < 3; ++c) img[p * 3 + c] = (1.0 - w) * img[p * 3 + c] + w * params.haze_color[c];
        }
    }
    if (params.noise_sigma > 0.0) {
        Rng rng(seed);
        std::normal_distribution<double> normal(0.0, params.noise_sigma);
        for (double& v : img.storage()) v += normal(rng);
    }
    return clamp(img, -1.0, 1.0);
}

// ------------------------------------------------------------------ PNG

Image8 read_png(const fs::path& path) {
    if (!fs::exists(path)) throw ImageIoError("no such image: " + path.string());
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw ImageIoError("cannot read PNG " + path.string() + ": " + image.message);
    }
    if (image.format != PNG_FORMAT_RGB) {
        const bool linear = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
        png_image_free(&image);
        throw ImageIoError(path.string() + (linear ? ": 16-bit PNGs are not supported"
                                                   : ": only 8-bit RGB PNGs are supported"));
    }
    Image8 img(static_cast<int>(image.height), static_cast<int>(image.width));
    if (!png_image_finish_read(&image, nullptr, img.data.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw ImageIoError("cannot decode PNG " + path.string() + ": " + msg);
    }
    return img;
}

void write_png(const fs::path& path, const Image8& img) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, img.data.data(), 0, nullptr)) {
        throw ImageIoError("cannot write PNG " + path.string() + ": " + image.message);
    }
}

ImageTensor load_image(const fs::path& path) { return to_tensor(read_png(path)); }

void save_image(const ImageTensor& img, const fs::path& path) { write_png(path, to_image8(img)); }

// --------------------------------------------------------------- corpus

std::string split_name(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "unknown";
}

std::string pair_file_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d.png", index);
    return buf;
}

ImagePair make_pair(const CorpusSpec& spec, Split split, int index) {
    const std::uint64_t stream = static_cast<std::uint64_t>(split) * 1'000'000ULL + static_cast<std::uint64_t>(index);
    const std::uint64_t pair_seed = derive_seed(spec.seed, stream);
    ImagePair pair;
    pair.clean = make_clean(derive_seed(pair_seed, 0), spec.image_size, spec.image_size);
    pair.degraded = degrade(pair.clean, spec.degradation, derive_seed(pair_seed, 1));
    return pair;
}

void write_corpus(const fs::path& root, const CorpusSpec& spec) {
    if (fs::exists(root) && !fs::is_empty(root)) {
        throw std::invalid_argument("output directory " + root.string() + " is not empty");
    }
    const std::array<std::pair<Split, int>, 3> splits{
        {{Split::Train, spec.train_count}, {Split::Val, spec.val_count}, {Split::Test, spec.test_count}}};
    for (const auto& [split, count] : splits) {
        const fs::path dir = root / split_name(split);
        fs::create_directories(dir / "input");
        fs::create_directories(dir / "gt");
        for (int i = 0; i < count; ++i) {
            const ImagePair pair = make_pair(spec, split, i);
            save_image(pair.degraded, dir / "input" / pair_file_name(i));
            save_image(pair.clean, dir / "gt" / pair_file_name(i));
        }
    }
    std::ofstream manifest(root / "manifest.txt");
    const auto& d = spec.degradation;
    manifest.precision(17);
    manifest << "master_seed=" << spec.seed << "\n"
             << "image_size=" << spec.image_size << "\n"
             << "train_count=" << spec.train_count << "\n"
             << "val_count=" << spec.val_count << "\n"
             << "test_count=" << spec.test_count << "\n"
             << "gains=" << d.gains[0] << "," << d.gains[1] << "," << d.gains[2] << "\n"
             << "blur_sigma=" << d.blur_sigma << "\n"
             << "haze_color=" << d.haze_color[0] << "," << d.haze_color[1] << "," << d.haze_color[2] << "\n"
             << "haze_weight=" << d.haze_weight << "\n"
             << "noise_sigma=" << d.noise_sigma << "\n";
    if (!manifest) throw ImageIoError("cannot write corpus manifest");
}

std::vector<ImagePair> load_split(const fs::path& root, Split split) {
    const fs::path dir = root / split_name(split);
    if (!fs::is_directory(dir / "input") || !fs::is_directory(dir / "gt")) {
        throw ImageIoError("missing split directory " + dir.string());
    }
    std::vector<fs::path> names;
    for (const auto& entry : fs::directory_iterator(dir / "gt")) {
        if (entry.path().extension() == ".png") names.push_back(entry.path().filename());
    }
    std::sort(names.begin(), names.end());
    std::vector<ImagePair> pairs;
    pairs.reserve(names.size());
    for (const auto& name : names) {
        pairs.push_back({load_image(dir / "gt" / name), load_image(dir / "input" / name)});
    }
    return pairs;
}

}  // namespace uwdiff
