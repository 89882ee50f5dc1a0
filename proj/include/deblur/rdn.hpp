#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "deblur/image.hpp"
#include "deblur/tensor.hpp"

namespace deblur {

/// Weights of one convolution, laid out (out, in, kh, kw).
struct ConvParams {
    int out_channels = 0;
    int in_channels = 0;
    int kernel = 3;  // 1 or 3, square
    std::vector<double> weight;
    std::vector<double> bias;

    ConvParams() = default;
    ConvParams(int out, int in, int k);

    std::size_t weight_index(int o, int i, int ky, int kx) const {
        return ((static_cast<std::size_t>(o) * in_channels + i) * kernel + ky) * kernel + kx;
    }
    std::size_t parameter_count() const { return weight.size() + bias.size(); }
};

struct RdbParams {
    std::vector<ConvParams> convs;  // 3x3, dense inputs
    ConvParams fusion;              // 1x1 local feature fusion
};

struct RdnConfig {
    int blocks = 4;           // D
    int convs_per_block = 5;  // C
    int width = 32;           // feature channels and growth rate

    static RdnConfig full() { return {}; }
    static RdnConfig tiny() { return {1, 2, 2}; }

    friend bool operator==(const RdnConfig&, const RdnConfig&) = default;
};

void validate(const RdnConfig& config);

struct RdnMeta {
    float trained_sigma = 0.0f;
    std::string run_id;
};

/// Residual dense network: two shallow 3x3 convs, D residual dense blocks
/// of C densely connected 3x3 convs with 1x1 local fusion, 1x1 global fusion
/// of all block outputs, a global residual from the first shallow feature,
/// and a final 3x3 conv to one channel. No upscaling (scale factor 1).
///
/// Parameters are kept in double but always hold f32-representable values,
/// so a weights file round-trip is lossless.
struct RdnModel {
    RdnConfig config;
    ConvParams sfe1;
    ConvParams sfe2;
    std::vector<RdbParams> rdbs;
    ConvParams gff;
    ConvParams final_conv;
    RdnMeta meta;
};

/// Correctly shaped model with all weights and biases zero.
RdnModel make_zero_model(const RdnConfig& config);

/// He-normal weights (variance 2 / fan_in), zero biases, deterministic in seed.
RdnModel init_model(std::uint64_t seed, const RdnConfig& config = RdnConfig::full());

/// Every convolution in canonical order: sfe1, sfe2, per block (convs...,
/// fusion), gff, final. Serialization and the optimizer walk this order.
std::vector<ConvParams*> conv_layers(RdnModel& model);
std::vector<const ConvParams*> conv_layers(const RdnModel& model);

std::size_t parameter_count(const RdnModel& model);

/// Throws DimensionMismatch naming the first layer whose shape disagrees
/// with the config.
void validate_shapes(const RdnModel& model);

/// Rounds every parameter to the nearest f32.
void quantize_to_f32(RdnModel& model);

// Layer primitives. `inputs` act as one channel-concatenated tensor.
// 3x3 convolutions use replicate-edge "same" padding.
void conv_forward(const ConvParams& p, std::span<const Tensor3* const> inputs, Tensor3& out);
/// Accumulates parameter gradients into `grads` and input gradients into
/// the non-null entries of `grad_inputs`.
void conv_backward(const ConvParams& p, std::span<const Tensor3* const> inputs, const Tensor3& grad_out,
                   ConvParams& grads, std::span<Tensor3* const> grad_inputs);
void relu_inplace(Tensor3& t);
/// Zeroes gradient entries where the ReLU output was not positive.
void relu_backward(const Tensor3& activated, Tensor3& grad);

struct RdbTrace {
    std::vector<Tensor3> features;  // post-ReLU output of each dense conv
    Tensor3 output;                 // F_d
};

/// Every activation the backward pass needs.
struct ForwardTrace {
    Tensor3 input;
    Tensor3 shallow1;  // F_{-1}
    Tensor3 shallow2;  // F_0
    std::vector<RdbTrace> rdbs;
    Tensor3 global_fused;     // F_GF
    Tensor3 global_residual;  // F_GR
    Tensor3 output;           // post-ReLU, not clamped
};

ForwardTrace forward_trace(const RdnModel& model, const Tensor3& input);

/// Unclamped single-channel network output.
Tensor3 forward_raw(const RdnModel& model, const Tensor3& input);

/// Inference on one single-channel tile; output clamped to [0,1].
Image forward(const RdnModel& model, const Image& tile);

Tensor3 to_tensor(const Image& img);
Image to_image(const Tensor3& t, bool clamp = true);

/// Weights file "RDNW" (version 1). Layout:
///   magic, u32 version, u32 D, u32 C, u32 width,
///   f32 trained_sigma, u32 run-id byte length, run-id UTF-8 bytes,
///   then per tensor in conv_layers() order (weight then
///   bias): u32 rank, rank x u32 dims, little-endian f32 payload.
void save_weights(const RdnModel& model, const std::filesystem::path& path);
RdnModel load_weights(const std::filesystem::path& path);

inline constexpr char kWeightsMagic[4] = {'R', 'D', 'N', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

}  // namespace deblur
