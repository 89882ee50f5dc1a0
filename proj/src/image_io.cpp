#include "deblur/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "deblur/binary_io.hpp"
#include "deblur/error.hpp"

namespace fs = std::filesystem;

namespace deblur {

std::optional<ImageFormat> parse_image_format(std::string_view name) {
    if (name == "png8") return ImageFormat::Png8;
    if (name == "png16") return ImageFormat::Png16;
    if (name == "rawf32") return ImageFormat::RawF32;
    return std::nullopt;
}

ImageFormat format_for_path(const fs::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".raw" || ext == ".f32") {
        return ImageFormat::RawF32;
    }
    return ImageFormat::Png16;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    require(f != nullptr, ErrorKind::Io, "cannot open " + path.string());
    return f;
}

[[noreturn]] void png_error_handler(png_structp png, png_const_charp msg) {
    auto* message = static_cast<std::string*>(png_get_error_ptr(png));
    if (message != nullptr) {
        *message = msg;
    }
    png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

Image load_png(const fs::path& path) {
    FilePtr file = open_file(path, "rb");
    std::string png_message;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &png_message, png_error_handler,
                                             png_warning_handler);
    require(png != nullptr, ErrorKind::Io, "libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    std::vector<unsigned char> pixels;
    std::vector<png_bytep> rows;
    Image img;
    std::string failure;

    // Nothing with a non-trivial destructor may be constructed between
    // setjmp and the last libpng call.
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::Format, "cannot decode " + path.string() + ": " + png_message);
    }

    png_init_io(png, file.get());
    png_read_info(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);

    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    } else if (bit_depth != 8 && bit_depth != 16) {
        failure = "unsupported PNG bit depth " + std::to_string(bit_depth);
    }
    if (failure.empty()) {
        if (color_type & PNG_COLOR_MASK_ALPHA) {
            png_set_strip_alpha(png);
        }
        if (png_get_valid(png, info, PNG_INFO_tRNS)) {
            png_set_tRNS_to_alpha(png);
            png_set_strip_alpha(png);
        }
        if (bit_depth == 16) {
            png_set_swap(png);  // native little-endian u16 rows
        }
        png_read_update_info(png, info);

        const int channels = png_get_channels(png, info);
        const std::size_t rowbytes = png_get_rowbytes(png, info);
        pixels.resize(rowbytes * height);
        rows.resize(height);
        for (png_uint_32 y = 0; y < height; ++y) {
            rows[y] = pixels.data() + y * rowbytes;
        }
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);

        const int depth = png_get_bit_depth(png, info);
        img.height = static_cast<int>(height);
        img.width = static_cast<int>(width);
        img.channels = channels;
        img.data.resize(static_cast<std::size_t>(width) * height * channels);
        if (depth == 16) {
            for (std::size_t i = 0; i < img.data.size(); ++i) {
                std::uint16_t v = 0;
                std::memcpy(&v, pixels.data() + 2 * i, 2);
                if constexpr (std::endian::native == std::endian::big) {
                    v = static_cast<std::uint16_t>((v >> 8) | (v << 8));
                }
                img.data[i] = static_cast<float>(v / 65535.0);
            }
        } else {
            for (std::size_t i = 0; i < img.data.size(); ++i) {
                img.data[i] = static_cast<float>(pixels[i] / 255.0);
            }
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    require(failure.empty(), ErrorKind::Format, failure + " in " + path.string());
    require(img.channels == 1 || img.channels == 3, ErrorKind::Format,
            "unsupported PNG channel layout in " + path.string());
    return img;
}

void save_png(const Image& img, const fs::path& path, int bit_depth) {
    FilePtr file = open_file(path, "wb");
    const int channels = img.channels;
    const std::size_t samples_per_row = static_cast<std::size_t>(img.width) * channels;
    const std::size_t bytes_per_sample = bit_depth == 16 ? 2 : 1;
    std::vector<unsigned char> pixels(samples_per_row * bytes_per_sample * img.height);
    const double scale = bit_depth == 16 ? 65535.0 : 255.0;
    // v * scale + 0.5 truncated equals lround for the non-negative values here.
    const auto quantize = [scale](float f) {
        const double v = std::clamp(static_cast<double>(f), 0.0, 1.0);
        return static_cast<std::uint32_t>(v * scale + 0.5);
    };
    if (bit_depth == 16) {
        for (std::size_t i = 0; i < img.data.size(); ++i) {
            const std::uint32_t q = quantize(img.data[i]);
            pixels[2 * i] = static_cast<unsigned char>(q >> 8);  // PNG is big-endian
            pixels[2 * i + 1] = static_cast<unsigned char>(q & 0xFF);
        }
    } else {
        for (std::size_t i = 0; i < img.data.size(); ++i) pixels[i] = static_cast<unsigned char>(quantize(img.data[i]));
    }
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) {
        rows[y] = pixels.data() + y * samples_per_row * bytes_per_sample;
    }

    std::string png_message;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &png_message, png_error_handler,
                                              png_warning_handler);
    require(png != nullptr, ErrorKind::Io, "libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::Io, "cannot write " + path.string() + ": " + png_message);
    }
    png_init_io(png, file.get());
    png_set_compression_level(png, 3);
    // Adaptive filter selection costs more than the compression itself on small tiles.
    png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_SUB);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 bit_depth, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image load_raw(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    require(static_cast<bool>(in) && std::equal(magic.begin(), magic.end(), kRawMagic), ErrorKind::Format,
            "bad rawf32 magic in " + path.string());
    const std::uint32_t h = binary::read_u32(in);
    const std::uint32_t w = binary::read_u32(in);
    const std::uint32_t c = binary::read_u32(in);
    require(h > 0 && w > 0 && (c == 1 || c == 3), ErrorKind::Format,
            "invalid rawf32 header dimensions in " + path.string());

    const std::uintmax_t expected = kRawHeaderBytes + std::uintmax_t{h} * w * c * 4;
    require(fs::file_size(path) == expected, ErrorKind::Format,
            "rawf32 payload size does not match header in " + path.string());

    Image img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    std::vector<unsigned char> bytes(img.data.size() * 4);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(in), ErrorKind::Format, "truncated rawf32 payload in " + path.string());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        std::uint32_t bits = 0;
        binary::decode_u32(bytes.data() + 4 * i, bits);
        img.data[i] = std::bit_cast<float>(bits);
    }
    for (float v : img.data) {
        if (!(std::isfinite(v) && v >= 0.0f && v <= 1.0f)) {
            fail(ErrorKind::Format, "rawf32 intensity outside [0,1] in " + path.string());
        }
    }
    return img;
}

void save_raw(const Image& img, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
    out.write(kRawMagic, 4);
    binary::write_u32(out, static_cast<std::uint32_t>(img.height));
    binary::write_u32(out, static_cast<std::uint32_t>(img.width));
    binary::write_u32(out, static_cast<std::uint32_t>(img.channels));
    std::vector<unsigned char> bytes(img.data.size() * 4);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(img.data[i]);
        bytes[4 * i] = static_cast<unsigned char>(bits & 0xFF);
        bytes[4 * i + 1] = static_cast<unsigned char>((bits >> 8) & 0xFF);
        bytes[4 * i + 2] = static_cast<unsigned char>((bits >> 16) & 0xFF);
        bytes[4 * i + 3] = static_cast<unsigned char>(bits >> 24);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace

Image load_image(const fs::path& path) {
    std::ifstream probe(path, std::ios::binary);
    require(static_cast<bool>(probe), ErrorKind::Io, "cannot open " + path.string());
    std::array<unsigned char, 8> head{};
    probe.read(reinterpret_cast<char*>(head.data()), head.size());
    const auto got = static_cast<std::size_t>(probe.gcount());
    probe.close();

    if (got >= 4 && std::equal(head.begin(), head.begin() + 4, kRawMagic,
                               [](unsigned char a, char b) { return a == static_cast<unsigned char>(b); })) {
        return load_raw(path);
    }
    if (got == 8 && png_sig_cmp(head.data(), 0, 8) == 0) {
        return load_png(path);
    }
    fail(ErrorKind::Format, "unrecognized image format: " + path.string());
}

void save_image(const Image& img, const fs::path& path, ImageFormat format) {
    validate(img);
    switch (format) {
        case ImageFormat::Png8: save_png(img, path, 8); break;
        case ImageFormat::Png16: save_png(img, path, 16); break;
        case ImageFormat::RawF32: save_raw(img, path); break;
    }
}

}  // namespace deblur
