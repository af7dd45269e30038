#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace uwdiff {

// H x W x C real array, row-major [h][w][c].
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(int height, int width, int channels, double fill = 0.0);
    Tensor3(int height, int width, int channels, std::vector<double> data);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int h, int w, int c) { return data_[index(h, w, c)]; }
    double at(int h, int w, int c) const { return data_[index(h, w, c)]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Pointer to the channel vector at pixel (h, w).
    double* pixel(int h, int w) { return data_.data() + index(h, w, 0); }
    const double* pixel(int h, int w) const { return data_.data() + index(h, w, 0); }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    bool same_shape(const Tensor3& other) const {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }
    std::string shape_string() const;

    bool all_finite() const;

    Tensor3& operator+=(const Tensor3& other);
    Tensor3& operator*=(double s);

    friend bool operator==(const Tensor3&, const Tensor3&) = default;

private:
    std::size_t index(int h, int w, int c) const {
        return (static_cast<std::size_t>(h) * width_ + w) * channels_ + c;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

// Images are nominally in [-1, 1]; feature maps are unbounded.
using ImageTensor = Tensor3;
using FeatureMap = Tensor3;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

void require_same_shape(const Tensor3& a, const Tensor3& b, const char* what);

Tensor3 clamp(const Tensor3& x, double lo, double hi);
double mean_abs_diff(const Tensor3& a, const Tensor3& b);

}  // namespace uwdiff
