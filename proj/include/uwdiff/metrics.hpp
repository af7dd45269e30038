#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uwdiff/tensor.hpp"

namespace uwdiff {

/// 8-bit RGB image, row-major [h][w][3].
struct Image8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    Image8() = default;
    Image8(int h, int w, std::uint8_t fill = 0);

    std::uint8_t& at(int h, int w, int c) { return data[(static_cast<std::size_t>(h) * width + w) * 3 + c]; }
    std::uint8_t at(int h, int w, int c) const { return data[(static_cast<std::size_t>(h) * width + w) * 3 + c]; }

    friend bool operator==(const Image8&, const Image8&) = default;
};

/// x -> round((x + 1) * 127.5), clamped to [0, 255].
std::uint8_t to_u8(double x);
Image8 to_image8(const ImageTensor& img);
/// v -> v / 127.5 - 1.
ImageTensor to_tensor(const Image8& img);

/// 10 log10(255^2 / MSE) over all samples; +inf for identical images.
double psnr(const Image8& a, const Image8& b);

/// Single-scale SSIM on ITU-R 601 luma with an 11x11 Gaussian window
/// (sigma 1.5), K1 = 0.01, K2 = 0.03, L = 255, averaged over all valid windows.
double ssim(const Image8& a, const Image8& b);

/// Formats a metric value; infinities render as "inf".
std::string format_metric(double value);

}  // namespace uwdiff
