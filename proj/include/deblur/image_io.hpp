#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>

#include "deblur/image.hpp"

namespace deblur {

enum class ImageFormat { Png8, Png16, RawF32 };

std::optional<ImageFormat> parse_image_format(std::string_view name);

/// Picks a format from the file extension: ".raw"/".f32" map to RawF32,
/// anything else to 16-bit PNG.
ImageFormat format_for_path(const std::filesystem::path& path);

/// Loads 8- or 16-bit grayscale/RGB PNG (alpha is dropped) or the
/// rawf32 "DBF1" format. The format is sniffed from the file header.
Image load_image(const std::filesystem::path& path);

void save_image(const Image& img, const std::filesystem::path& path, ImageFormat format);

// rawf32 layout: "DBF1", then height, width, channels as little-endian u32,
// then row-major little-endian f32 samples.
inline constexpr char kRawMagic[4] = {'D', 'B', 'F', '1'};
inline constexpr std::size_t kRawHeaderBytes = 16;

}  // namespace deblur
