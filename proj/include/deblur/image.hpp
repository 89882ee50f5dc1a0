#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace deblur {

/// Row-major H x W x C image with intensities normalized to [0,1].
/// Channels are interleaved per pixel.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c = 1, float fill = 0.0f);

    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    float& at(int y, int x, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    bool same_shape(const Image& other) const {
        return height == other.height && width == other.width && channels == other.channels;
    }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Throws unless dimensions are positive, the buffer length matches and
/// every sample is finite and within [0,1].
void validate(const Image& img);

/// Clamps every sample into [0,1]; NaN becomes 0.
void clamp_unit(Image& img);

Image extract_channel(const Image& img, int channel);
std::vector<Image> split_channels(const Image& img);
Image merge_channels(std::span<const Image> planes);

/// Single-channel double-precision working buffer used by the numeric
/// kernels (convolution, deconvolution). Values are not range-restricted.
struct Plane {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Plane() = default;
    Plane(int h, int w, double fill = 0.0)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

    double& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

Plane to_plane(const Image& img);  // requires a single-channel image
Image to_image(const Plane& plane, bool clamp = true);

struct TileGrid {
    int tile_size = 256;
    int rows = 0;
    int cols = 0;
    int pad_bottom = 0;
    int pad_right = 0;
    int source_height = 0;
    int source_width = 0;
    std::vector<Image> tiles;  // row-major

    const Image& tile_at(int r, int c) const { return tiles[static_cast<std::size_t>(r) * cols + c]; }
};

/// Pads with replicated edges to a multiple of tile_size, then cuts the
/// image into tile_size x tile_size tiles in row-major order.
TileGrid tile(const Image& img, int tile_size = 256);

/// Butt-joins the tiles row-major and crops to out_height x out_width.
Image stitch(const TileGrid& grid, int out_height, int out_width);

struct VolumeStack {
    std::vector<Image> slices;

    int depth() const { return static_cast<int>(slices.size()); }
};

void validate(const VolumeStack& vol);

std::vector<TileGrid> split_volume(const VolumeStack& vol, int tile_size = 256);

/// Overlapping tiling for the optional feathered stitch mode. Tiles are
/// tile_size wide and advance by tile_size - overlap.
struct OverlapGrid {
    int tile_size = 256;
    int overlap = 0;
    int source_height = 0;
    int source_width = 0;
    std::vector<int> row_offsets;
    std::vector<int> col_offsets;
    std::vector<Image> tiles;
};

OverlapGrid tile_overlapping(const Image& img, int tile_size, int overlap);

/// Blends overlapping tiles with linear ramps across each overlap band.
Image stitch_feathered(const OverlapGrid& grid);

}  // namespace deblur
