#include "deblur/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deblur/error.hpp"

namespace deblur {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid_argument";
        case ErrorKind::DimensionMismatch: return "dimension_mismatch";
        case ErrorKind::Io: return "io";
        case ErrorKind::Format: return "format";
        case ErrorKind::Numeric: return "numeric";
        case ErrorKind::Training: return "training";
    }
    return "unknown";
}

Image::Image(int h, int w, int c, float fill)
    : height(h), width(w), channels(c) {
    require(h >= 0 && w >= 0, ErrorKind::InvalidArgument, "image dimensions must be non-negative");
    require(c == 1 || c == 3, ErrorKind::InvalidArgument,
            "image must have 1 or 3 channels, got " + std::to_string(c));
    data.assign(static_cast<std::size_t>(h) * w * c, fill);
}

void validate(const Image& img) {
    require(img.height > 0 && img.width > 0, ErrorKind::InvalidArgument, "image has no pixels");
    require(img.channels == 1 || img.channels == 3, ErrorKind::InvalidArgument,
            "image must have 1 or 3 channels");
    require(img.data.size() == img.pixel_count() * img.channels, ErrorKind::DimensionMismatch,
            "image buffer length does not match height x width x channels");
    for (float v : img.data) {
        if (!(std::isfinite(v) && v >= 0.0f && v <= 1.0f)) {
            fail(ErrorKind::Numeric, "image intensity outside [0,1]: " + std::to_string(v));
        }
    }
}

void clamp_unit(Image& img) {
    for (float& v : img.data) {
        v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
    }
}

Image extract_channel(const Image& img, int channel) {
    require(channel >= 0 && channel < img.channels, ErrorKind::InvalidArgument,
            "channel index out of range");
    Image out(img.height, img.width, 1);
    const std::size_t n = img.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        out.data[i] = img.data[i * img.channels + channel];
    }
    return out;
}

std::vector<Image> split_channels(const Image& img) {
    std::vector<Image> planes;
    planes.reserve(img.channels);
    for (int c = 0; c < img.channels; ++c) {
        planes.push_back(extract_channel(img, c));
    }
    return planes;
}

Image merge_channels(std::span<const Image> planes) {
    require(planes.size() == 1 || planes.size() == 3, ErrorKind::InvalidArgument,
            "merge_channels expects 1 or 3 planes");
    const int h = planes[0].height;
    const int w = planes[0].width;
    for (const Image& p : planes) {
        require(p.channels == 1 && p.height == h && p.width == w, ErrorKind::DimensionMismatch,
                "planes must be single-channel with identical dimensions");
    }
    const int c = static_cast<int>(planes.size());
    Image out(h, w, c);
    const std::size_t n = out.pixel_count();
    for (int k = 0; k < c; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            out.data[i * c + k] = planes[k].data[i];
        }
    }
    return out;
}

Plane to_plane(const Image& img) {
    require(img.channels == 1, ErrorKind::InvalidArgument, "expected a single-channel image");
    Plane p(img.height, img.width);
    std::copy(img.data.begin(), img.data.end(), p.data.begin());
    return p;
}

Image to_image(const Plane& plane, bool clamp) {
    Image out(plane.height, plane.width, 1);
    for (std::size_t i = 0; i < plane.data.size(); ++i) {
        out.data[i] = static_cast<float>(plane.data[i]);
    }
    if (clamp) {
        clamp_unit(out);
    }
    return out;
}

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

// Copies a size_h x size_w window starting at (y0, x0), replicating edge
// pixels for coordinates past the source bounds.
Image crop_replicate(const Image& img, int y0, int x0, int size_h, int size_w) {
    Image out(size_h, size_w, img.channels);
    const int c = img.channels;
    for (int y = 0; y < size_h; ++y) {
        const int sy = std::clamp(y0 + y, 0, img.height - 1);
        for (int x = 0; x < size_w; ++x) {
            const int sx = std::clamp(x0 + x, 0, img.width - 1);
            const float* src = &img.data[(static_cast<std::size_t>(sy) * img.width + sx) * c];
            float* dst = &out.data[(static_cast<std::size_t>(y) * size_w + x) * c];
            std::copy(src, src + c, dst);
        }
    }
    return out;
}

}  // namespace

TileGrid tile(const Image& img, int tile_size) {
    require(tile_size > 0, ErrorKind::InvalidArgument, "tile size must be positive");
    require(img.height > 0 && img.width > 0, ErrorKind::InvalidArgument, "cannot tile an empty image");

    TileGrid grid;
    grid.tile_size = tile_size;
    grid.rows = ceil_div(img.height, tile_size);
    grid.cols = ceil_div(img.width, tile_size);
    grid.pad_bottom = grid.rows * tile_size - img.height;
    grid.pad_right = grid.cols * tile_size - img.width;
    grid.source_height = img.height;
    grid.source_width = img.width;
    grid.tiles.reserve(static_cast<std::size_t>(grid.rows) * grid.cols);
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            grid.tiles.push_back(crop_replicate(img, r * tile_size, c * tile_size, tile_size, tile_size));
        }
    }
    return grid;
}

Image stitch(const TileGrid& grid, int out_height, int out_width) {
    const int t = grid.tile_size;
    require(grid.rows > 0 && grid.cols > 0 && t > 0, ErrorKind::InvalidArgument, "empty tile grid");
    require(grid.tiles.size() == static_cast<std::size_t>(grid.rows) * grid.cols,
            ErrorKind::DimensionMismatch, "tile count does not match rows x cols");
    require(out_height > 0 && out_width > 0 && out_height <= grid.rows * t && out_width <= grid.cols * t,
            ErrorKind::DimensionMismatch, "requested output exceeds padded grid dimensions");
    const int channels = grid.tiles.front().channels;
    for (const Image& tl : grid.tiles) {
        require(tl.height == t && tl.width == t && tl.channels == channels, ErrorKind::DimensionMismatch,
                "tile dimensions do not match the grid");
    }

    Image out(out_height, out_width, channels);
    for (int y = 0; y < out_height; ++y) {
        const int r = y / t;
        const int ty = y % t;
        for (int c = 0; c < grid.cols; ++c) {
            const int x0 = c * t;
            if (x0 >= out_width) {
                break;
            }
            const int span = std::min(t, out_width - x0);
            const Image& tl = grid.tile_at(r, c);
            const float* src = &tl.data[static_cast<std::size_t>(ty) * t * channels];
            float* dst = &out.data[(static_cast<std::size_t>(y) * out_width + x0) * channels];
            std::copy(src, src + static_cast<std::size_t>(span) * channels, dst);
        }
    }
    clamp_unit(out);
    return out;
}

void validate(const VolumeStack& vol) {
    require(!vol.slices.empty(), ErrorKind::InvalidArgument, "volume stack is empty");
    const Image& first = vol.slices.front();
    require(first.channels == 1, ErrorKind::InvalidArgument, "volume slices must be single-channel");
    for (const Image& s : vol.slices) {
        require(s.same_shape(first), ErrorKind::DimensionMismatch,
                "all slices of a volume must share dimensions");
    }
}

std::vector<TileGrid> split_volume(const VolumeStack& vol, int tile_size) {
    validate(vol);
    std::vector<TileGrid> grids;
    grids.reserve(vol.slices.size());
    for (const Image& s : vol.slices) {
        grids.push_back(tile(s, tile_size));
    }
    return grids;
}

namespace {

std::vector<int> overlap_offsets(int extent, int tile_size, int stride) {
    std::vector<int> offsets;
    if (extent <= tile_size) {
        offsets.push_back(0);
        return offsets;
    }
    for (int o = 0; o + tile_size < extent; o += stride) {
        offsets.push_back(o);
    }
    offsets.push_back(extent - tile_size);
    return offsets;
}

double ramp(int i, int tile_size, int overlap) {
    const double denom = overlap + 1.0;
    return std::min({1.0, (i + 1) / denom, (tile_size - i) / denom});
}

}  // namespace

OverlapGrid tile_overlapping(const Image& img, int tile_size, int overlap) {
    require(tile_size > 0, ErrorKind::InvalidArgument, "tile size must be positive");
    require(overlap >= 0 && overlap < tile_size, ErrorKind::InvalidArgument,
            "overlap must be in [0, tile_size)");
    require(img.height > 0 && img.width > 0, ErrorKind::InvalidArgument, "cannot tile an empty image");

    OverlapGrid grid;
    grid.tile_size = tile_size;
    grid.overlap = overlap;
    grid.source_height = img.height;
    grid.source_width = img.width;
    const int stride = tile_size - overlap;
    grid.row_offsets = overlap_offsets(img.height, tile_size, stride);
    grid.col_offsets = overlap_offsets(img.width, tile_size, stride);
    for (int oy : grid.row_offsets) {
        for (int ox : grid.col_offsets) {
            grid.tiles.push_back(crop_replicate(img, oy, ox, tile_size, tile_size));
        }
    }
    return grid;
}

Image stitch_feathered(const OverlapGrid& grid) {
    const int t = grid.tile_size;
    const std::size_t expected = grid.row_offsets.size() * grid.col_offsets.size();
    require(expected > 0 && grid.tiles.size() == expected, ErrorKind::DimensionMismatch,
            "tile count does not match overlap grid");
    const int channels = grid.tiles.front().channels;
    const int h = grid.source_height;
    const int w = grid.source_width;

    std::vector<double> acc(static_cast<std::size_t>(h) * w * channels, 0.0);
    std::vector<double> weight(static_cast<std::size_t>(h) * w, 0.0);
    std::size_t k = 0;
    for (int oy : grid.row_offsets) {
        for (int ox : grid.col_offsets) {
            const Image& tl = grid.tiles[k++];
            require(tl.height == t && tl.width == t && tl.channels == channels,
                    ErrorKind::DimensionMismatch, "tile dimensions do not match the grid");
            for (int y = 0; y < t && oy + y < h; ++y) {
                const double wy = ramp(y, t, grid.overlap);
                for (int x = 0; x < t && ox + x < w; ++x) {
                    const double wgt = wy * ramp(x, t, grid.overlap);
                    const std::size_t p = static_cast<std::size_t>(oy + y) * w + (ox + x);
                    weight[p] += wgt;
                    for (int c = 0; c < channels; ++c) {
                        acc[p * channels + c] += wgt * tl.at(y, x, c);
                    }
                }
            }
        }
    }

    Image out(h, w, channels);
    for (std::size_t p = 0; p < weight.size(); ++p) {
        for (int c = 0; c < channels; ++c) {
            out.data[p * channels + c] = static_cast<float>(acc[p * channels + c] / weight[p]);
        }
    }
    clamp_unit(out);
    return out;
}

}  // namespace deblur
