#include "deblur/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "deblur/error.hpp"
#include "deblur/psf.hpp"

namespace deblur::synthetic {

Image checkerboard(int height, int width, int period, float low, float high) {
    require(period >= 1, ErrorKind::InvalidArgument, "checkerboard period must be positive");
    Image img(height, width, 1);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            img.at(y, x) = ((y / period + x / period) % 2 == 0) ? low : high;
        }
    }
    return img;
}

Image bar_target(int height, int width, int widest_bar, float low, float high) {
    require(widest_bar >= 1, ErrorKind::InvalidArgument, "bar width must be positive");
    Image img(height, width, 1, low);
    int x = widest_bar;
    for (int bar = widest_bar; bar >= 1 && x < width; bar /= 2) {
        for (int k = 0; k < 3 && x < width; ++k) {
            for (int dx = 0; dx < bar && x + dx < width; ++dx) {
                for (int y = height / 8; y < height - height / 8; ++y) img.at(y, x + dx) = high;
            }
            x += 2 * bar;
        }
        x += 2 * bar;
    }
    return img;
}

Image blade_edge(int height, int width, int edge_column, float low, float high) {
    Image img(height, width, 1);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) img.at(y, x) = x < edge_column ? low : high;
    }
    return img;
}

Image random_scene(int height, int width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Image img(height, width, 1, static_cast<float>(0.3 * unit(rng)));
    const int shapes = 6 + static_cast<int>(unit(rng) * 10);
    for (int s = 0; s < shapes; ++s) {
        const float value = static_cast<float>(unit(rng));
        const int kind = static_cast<int>(unit(rng) * 4);
        const double cy = unit(rng) * height;
        const double cx = unit(rng) * width;
        const double size = 2.0 + unit(rng) * 0.3 * std::min(height, width);
        const int period = 2 + static_cast<int>(unit(rng) * 7);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double dy = y - cy;
                const double dx = x - cx;
                bool inside = false;
                switch (kind) {
                    case 0: inside = std::abs(dy) < size && std::abs(dx) < 0.6 * size; break;
                    case 1: inside = dx * dx + dy * dy < size * size; break;
                    case 2: inside = std::abs(dy) < size && std::abs(dx) < size && (x / period) % 2 == 0; break;
                    default:
                        inside = std::abs(dy) < size && std::abs(dx) < size && ((x / period + y / period) % 2 == 0);
                        break;
                }
                if (inside) img.at(y, x) = value;
            }
        }
    }
    return img;
}

namespace {

Image random_pattern(int size, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int period = 2 + static_cast<int>(unit(rng) * 9);
    const auto low = static_cast<float>(0.3 * unit(rng));
    const auto high = static_cast<float>(0.7 + 0.3 * unit(rng));
    const int oy = static_cast<int>(unit(rng) * period);
    const int ox = static_cast<int>(unit(rng) * period);
    const bool checker = unit(rng) < 0.5;
    const bool vertical = unit(rng) < 0.5;
    Image img(size, size, 1);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const int a = (y + oy) / period;
            const int b = (x + ox) / period;
            const bool on = checker ? ((a + b) % 2 == 0) : ((vertical ? b : a) % 2 == 0);
            img.at(y, x) = on ? high : low;
        }
    }
    return img;
}

}  // namespace

std::vector<TrainingPair> make_pairs(int count, int size, double sigma, std::uint64_t seed) {
    require(count >= 1 && size >= 1, ErrorKind::InvalidArgument, "need a positive pair count and size");
    std::mt19937_64 rng(seed);
    std::vector<TrainingPair> pairs;
    pairs.reserve(count);
    for (int k = 0; k < count; ++k) {
        Image target = k % 2 == 0 ? random_pattern(size, rng) : random_scene(size, size, rng());
        Image input = blur(target, sigma);
        pairs.push_back({std::move(input), std::move(target)});
    }
    return pairs;
}

}  // namespace deblur::synthetic
