#include "uwdiff/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace uwdiff {

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;

void require_same_dims(const Image8& a, const Image8& b) {
    if (a.height != b.height || a.width != b.width) {
        throw std::invalid_argument("image dimensions differ: " + std::to_string(a.height) + "x" +
                                    std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                    std::to_string(b.width));
    }
}

std::array<double, kWindow> gaussian_window() {
    std::array<double, kWindow> w{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kWindow / 2;
        w[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

std::vector<double> luma(const Image8& img) {
    std::vector<double> y(static_cast<std::size_t>(img.height) * img.width);
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2];
    }
    return y;
}

// Separable Gaussian filter keeping only fully covered ("valid") windows.
std::vector<double> filter_valid(const std::vector<double>& src, int height, int width,
                                 const std::array<double, kWindow>& w) {
    const int out_h = height - kWindow + 1;
    const int out_w = width - kWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(height) * out_w);
    for (int h = 0; h < height; ++h) {
        for (int c = 0; c < out_w; ++c) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += w[k] * src[static_cast<std::size_t>(h) * width + c + k];
            rows[static_cast<std::size_t>(h) * out_w + c] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(out_h) * out_w);
    for (int h = 0; h < out_h; ++h) {
        for (int c = 0; c < out_w; ++c) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += w[k] * rows[static_cast<std::size_t>(h + k) * out_w + c];
            out[static_cast<std::size_t>(h) * out_w + c] = acc;
        }
    }
    return out;
}

}  // namespace

Image8::Image8(int h, int w, std::uint8_t fill) : height(h), width(w) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("image dimensions must be positive");
    data.assign(static_cast<std::size_t>(h) * w * 3, fill);
}

std::uint8_t to_u8(double x) {
    const double v = std::round((x + 1.0) * 127.5);
    return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

Image8 to_image8(const ImageTensor& img) {
    if (img.channels() != 3) throw std::invalid_argument("expected a 3-channel image, got " + img.shape_string());
    Image8 out(img.height(), img.width());
    for (std::size_t i = 0; i < img.size(); ++i) out.data[i] = to_u8(img[i]);
    return out;
}

ImageTensor to_tensor(const Image8& img) {
    ImageTensor out(img.height, img.width, 3);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = img.data[i] / 127.5 - 1.0;
    return out;
}

double psnr(const Image8& a, const Image8& b) {
    require_same_dims(a, b);
    double sse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        sse += d * d;
    }
    if (sse == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = sse / static_cast<double>(a.data.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Image8& a, const Image8& b) {
    require_same_dims(a, b);
    if (a.height < kWindow || a.width < kWindow) {
        throw std::invalid_argument("ssim needs images of at least 11x11");
    }
    constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);
    const auto w = gaussian_window();
    const int H = a.height;
    const int W = a.width;
    const std::vector<double> x = luma(a);
    const std::vector<double> y = luma(b);
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mu_x = filter_valid(x, H, W, w);
    const auto mu_y = filter_valid(y, H, W, w);
    const auto e_xx = filter_valid(xx, H, W, w);
    const auto e_yy = filter_valid(yy, H, W, w);
    const auto e_xy = filter_valid(xy, H, W, w);

    double total = 0.0;
    for (std::size_t i = 0; i < mu_x.size(); ++i) {
        const double mx = mu_x[i];
        const double my = mu_y[i];
        const double var_x = e_xx[i] - mx * mx;
        const double var_y = e_yy[i] - my * my;
        const double cov = e_xy[i] - mx * my;
        const double num = (2.0 * mx * my + kC1) * (2.0 * cov + kC2);
        const double den = (mx * mx + my * my + kC1) * (var_x + var_y + kC2);
        total += num / den;
    }
    return total / static_cast<double>(mu_x.size());
}

std::string format_metric(double value) {
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    std::ostringstream out;
    out.precision(10);
    out << value;
    return out.str();
}

}  // namespace uwdiff
