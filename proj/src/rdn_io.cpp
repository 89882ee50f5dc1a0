#include <array>
#include <cmath>
#include <fstream>

#include "deblur/binary_io.hpp"
#include "deblur/error.hpp"
#include "deblur/rdn.hpp"

namespace deblur {

namespace {

constexpr std::uint32_t kMaxRunIdBytes = 1u << 16;
constexpr std::uint32_t kMaxDim = 1u << 16;

void write_tensor(std::ostream& out, const std::vector<std::uint32_t>& dims, const std::vector<double>& values) {
    binary::write_u32(out, static_cast<std::uint32_t>(dims.size()));
    for (std::uint32_t d : dims) binary::write_u32(out, d);
    for (double v : values) binary::write_f32(out, static_cast<float>(v));
}

void read_tensor(std::istream& in, const std::vector<std::uint32_t>& expected_dims, std::vector<double>& values,
                 const std::string& what) {
    const std::uint32_t rank = binary::read_u32(in);
    require(rank == expected_dims.size(), ErrorKind::Format,
            what + ": rank " + std::to_string(rank) + ", expected " + std::to_string(expected_dims.size()));
    for (std::size_t k = 0; k < rank; ++k) {
        const std::uint32_t d = binary::read_u32(in);
        require(d == expected_dims[k], ErrorKind::Format,
                what + ": dimension " + std::to_string(k) + " is " + std::to_string(d) + ", expected " +
                    std::to_string(expected_dims[k]));
    }
    for (double& v : values) {
        const float f = binary::read_f32(in);
        if (!std::isfinite(f)) fail(ErrorKind::Format, what + ": non-finite value");
        v = f;
    }
}

std::vector<std::uint32_t> weight_dims(const ConvParams& p) {
    return {static_cast<std::uint32_t>(p.out_channels), static_cast<std::uint32_t>(p.in_channels),
            static_cast<std::uint32_t>(p.kernel), static_cast<std::uint32_t>(p.kernel)};
}

}  // namespace

void save_weights(const RdnModel& model, const std::filesystem::path& path) {
    validate_shapes(model);
    require(model.meta.run_id.size() < kMaxRunIdBytes, ErrorKind::InvalidArgument, "run id too long");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");

    out.write(kWeightsMagic, 4);
    binary::write_u32(out, kWeightsVersion);
    binary::write_u32(out, static_cast<std::uint32_t>(model.config.blocks));
    binary::write_u32(out, static_cast<std::uint32_t>(model.config.convs_per_block));
    binary::write_u32(out, static_cast<std::uint32_t>(model.config.width));
    binary::write_f32(out, model.meta.trained_sigma);
    binary::write_u32(out, static_cast<std::uint32_t>(model.meta.run_id.size()));
    out.write(model.meta.run_id.data(), static_cast<std::streamsize>(model.meta.run_id.size()));
    for (const ConvParams* layer : conv_layers(model)) {
        write_tensor(out, weight_dims(*layer), layer->weight);
        write_tensor(out, {static_cast<std::uint32_t>(layer->out_channels)}, layer->bias);
    }
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

RdnModel load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    require(static_cast<bool>(in) && std::equal(magic.begin(), magic.end(), kWeightsMagic), ErrorKind::Format,
            "not an RDNW weights file: " + path.string());
    const std::uint32_t version = binary::read_u32(in);
    require(version == kWeightsVersion, ErrorKind::Format,
            "unsupported weights version " + std::to_string(version) + " in " + path.string());

    RdnConfig config;
    const std::uint32_t d = binary::read_u32(in);
    const std::uint32_t c = binary::read_u32(in);
    const std::uint32_t w = binary::read_u32(in);
    require(d >= 1 && c >= 1 && w >= 1 && d < kMaxDim && c < kMaxDim && w < kMaxDim, ErrorKind::Format,
            "implausible RDN shape in " + path.string());
    config.blocks = static_cast<int>(d);
    config.convs_per_block = static_cast<int>(c);
    config.width = static_cast<int>(w);

    RdnModel model = make_zero_model(config);
    model.meta.trained_sigma = binary::read_f32(in);
    const std::uint32_t id_len = binary::read_u32(in);
    require(id_len < kMaxRunIdBytes, ErrorKind::Format, "run id too long in " + path.string());
    model.meta.run_id.resize(id_len);
    in.read(model.meta.run_id.data(), id_len);
    require(static_cast<bool>(in), ErrorKind::Format, "truncated weights file " + path.string());

    int index = 0;
    for (ConvParams* layer : conv_layers(model)) {
        const std::string what = path.string() + " layer " + std::to_string(index++);
        read_tensor(in, weight_dims(*layer), layer->weight, what + " weight");
        read_tensor(in, {static_cast<std::uint32_t>(layer->out_channels)}, layer->bias, what + " bias");
    }
    in.peek();
    require(in.eof(), ErrorKind::Format, "trailing bytes after weights in " + path.string());
    return model;
}

}  // namespace deblur
