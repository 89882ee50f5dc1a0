#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace deblur {

/// Channel-major (C, H, W) activation buffer.
struct Tensor3 {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
    double* channel(int k) { return data.data() + k * plane_size(); }
    const double* channel(int k) const { return data.data() + k * plane_size(); }
    double& at(int c, int y, int x) { return data[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }
    double at(int c, int y, int x) const {
        return data[c * plane_size() + static_cast<std::size_t>(y) * width + x];
    }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

}  // namespace deblur
