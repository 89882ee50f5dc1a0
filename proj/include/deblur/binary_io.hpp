#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "deblur/error.hpp"

// Little-endian helpers shared by the rawf32 image and RDNW weight formats.
namespace deblur::binary {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline std::uint32_t byteswap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0x0000FF00u) | ((v << 8) & 0x00FF0000u) | (v << 24);
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        v = byteswap32(v);
    }
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f32(std::ostream& out, float f) {
    write_u32(out, std::bit_cast<std::uint32_t>(f));
}

inline std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    require(static_cast<bool>(in), ErrorKind::Format, "unexpected end of file");
    if constexpr (std::endian::native == std::endian::big) {
        v = byteswap32(v);
    }
    return v;
}

inline float read_f32(std::istream& in) { return std::bit_cast<float>(read_u32(in)); }

inline void decode_u32(const unsigned char* p, std::uint32_t& v) {
    v = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
        (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace deblur::binary
