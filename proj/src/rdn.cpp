#include "deblur/rdn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "deblur/error.hpp"

namespace deblur {

ConvParams::ConvParams(int out, int in, int k)
    : out_channels(out), in_channels(in), kernel(k),
      weight(static_cast<std::size_t>(out) * in * k * k, 0.0), bias(out, 0.0) {}

void validate(const RdnConfig& config) {
    require(config.blocks >= 1 && config.convs_per_block >= 1 && config.width >= 1, ErrorKind::InvalidArgument,
            "RDN config needs blocks, convs_per_block and width >= 1");
}

RdnModel make_zero_model(const RdnConfig& config) {
    validate(config);
    const int w = config.width;
    RdnModel m;
    m.config = config;
    m.sfe1 = ConvParams(w, 1, 3);
    m.sfe2 = ConvParams(w, w, 3);
    m.rdbs.resize(config.blocks);
    for (RdbParams& rdb : m.rdbs) {
        for (int c = 0; c < config.convs_per_block; ++c) {
            rdb.convs.emplace_back(w, w + c * w, 3);
        }
        rdb.fusion = ConvParams(w, w * (config.convs_per_block + 1), 1);
    }
    m.gff = ConvParams(w, w * config.blocks, 1);
    m.final_conv = ConvParams(1, w, 3);
    return m;
}

RdnModel init_model(std::uint64_t seed, const RdnConfig& config) {
    RdnModel m = make_zero_model(config);
    std::mt19937_64 rng(seed);
    for (ConvParams* layer : conv_layers(m)) {
        const double fan_in = static_cast<double>(layer->in_channels) * layer->kernel * layer->kernel;
        std::normal_distribution<double> he(0.0, std::sqrt(2.0 / fan_in));
        for (double& v : layer->weight) {
            v = static_cast<float>(he(rng));
        }
    }
    return m;
}

std::vector<ConvParams*> conv_layers(RdnModel& model) {
    std::vector<ConvParams*> layers{&model.sfe1, &model.sfe2};
    for (RdbParams& rdb : model.rdbs) {
        for (ConvParams& c : rdb.convs) layers.push_back(&c);
        layers.push_back(&rdb.fusion);
    }
    layers.push_back(&model.gff);
    layers.push_back(&model.final_conv);
    return layers;
}

std::vector<const ConvParams*> conv_layers(const RdnModel& model) {
    auto mutable_layers = conv_layers(const_cast<RdnModel&>(model));
    return {mutable_layers.begin(), mutable_layers.end()};
}

std::size_t parameter_count(const RdnModel& model) {
    std::size_t n = 0;
    for (const ConvParams* layer : conv_layers(model)) n += layer->parameter_count();
    return n;
}

void validate_shapes(const RdnModel& model) {
    validate(model.config);
    const RdnModel expected = make_zero_model(model.config);
    require(model.rdbs.size() == expected.rdbs.size(), ErrorKind::DimensionMismatch,
            "model has " + std::to_string(model.rdbs.size()) + " blocks, config says " +
                std::to_string(expected.rdbs.size()));
    for (std::size_t d = 0; d < model.rdbs.size(); ++d) {
        require(model.rdbs[d].convs.size() == expected.rdbs[d].convs.size(), ErrorKind::DimensionMismatch,
                "block " + std::to_string(d) + " has the wrong number of convolutions");
    }
    const auto got = conv_layers(model);
    const auto want = conv_layers(expected);
    for (std::size_t k = 0; k < got.size(); ++k) {
        const ConvParams& g = *got[k];
        const ConvParams& e = *want[k];
        const bool ok = g.out_channels == e.out_channels && g.in_channels == e.in_channels &&
                        g.kernel == e.kernel && g.weight.size() == e.weight.size() && g.bias.size() == e.bias.size();
        require(ok, ErrorKind::DimensionMismatch,
                "layer " + std::to_string(k) + " has shape " + std::to_string(g.out_channels) + "x" +
                    std::to_string(g.in_channels) + "x" + std::to_string(g.kernel) + ", expected " +
                    std::to_string(e.out_channels) + "x" + std::to_string(e.in_channels) + "x" +
                    std::to_string(e.kernel));
        for (double v : g.weight) require(std::isfinite(v), ErrorKind::Numeric, "non-finite weight");
        for (double v : g.bias) require(std::isfinite(v), ErrorKind::Numeric, "non-finite bias");
    }
}

void quantize_to_f32(RdnModel& model) {
    for (ConvParams* layer : conv_layers(model)) {
        for (double& v : layer->weight) v = static_cast<float>(v);
        for (double& v : layer->bias) v = static_cast<float>(v);
    }
}

namespace {

int total_channels(std::span<const Tensor3* const> inputs) {
    int c = 0;
    for (const Tensor3* t : inputs) c += t->channels;
    return c;
}

void pad_channel(const double* src, int h, int w, std::vector<double>& padded) {
    const int pw = w + 2;
    padded.resize(static_cast<std::size_t>(h + 2) * pw);
    for (int y = -1; y <= h; ++y) {
        const double* row = src + static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w;
        double* dst = &padded[static_cast<std::size_t>(y + 1) * pw];
        dst[0] = row[0];
        std::copy(row, row + w, dst + 1);
        dst[w + 1] = row[w - 1];
    }
}

// Adjoint of pad_channel: border gradients fold back onto the edge pixels.
void unpad_accumulate(const std::vector<double>& grad_padded, int h, int w, double* grad) {
    const int pw = w + 2;
    for (int py = 0; py < h + 2; ++py) {
        const int y = std::clamp(py - 1, 0, h - 1);
        const double* src = &grad_padded[static_cast<std::size_t>(py) * pw];
        double* dst = grad + static_cast<std::size_t>(y) * w;
        dst[0] += src[0];
        for (int x = 0; x < w; ++x) dst[x] += src[x + 1];
        dst[w - 1] += src[w + 1];
    }
}

}  // namespace

void conv_forward(const ConvParams& p, std::span<const Tensor3* const> inputs, Tensor3& out) {
    require(!inputs.empty(), ErrorKind::InvalidArgument, "convolution without inputs");
    const int h = inputs.front()->height;
    const int w = inputs.front()->width;
    for (const Tensor3* t : inputs) {
        require(t->height == h && t->width == w, ErrorKind::DimensionMismatch, "concatenated inputs differ in size");
    }
    require(total_channels(inputs) == p.in_channels, ErrorKind::DimensionMismatch,
            "convolution expects " + std::to_string(p.in_channels) + " input channels, got " +
                std::to_string(total_channels(inputs)));

    out = Tensor3(p.out_channels, h, w);
    const std::size_t plane = out.plane_size();
    for (int o = 0; o < p.out_channels; ++o) {
        std::fill(out.channel(o), out.channel(o) + plane, p.bias[o]);
    }

    std::vector<double> padded;
    int i = 0;
    for (const Tensor3* t : inputs) {
        for (int ci = 0; ci < t->channels; ++ci, ++i) {
            const double* src = t->channel(ci);
            if (p.kernel == 1) {
                for (int o = 0; o < p.out_channels; ++o) {
                    const double wt = p.weight[p.weight_index(o, i, 0, 0)];
                    double* dst = out.channel(o);
                    for (std::size_t k = 0; k < plane; ++k) dst[k] += wt * src[k];
                }
                continue;
            }
            pad_channel(src, h, w, padded);
            const int pw = w + 2;
            for (int o = 0; o < p.out_channels; ++o) {
                double* dst = out.channel(o);
                for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                        const double wt = p.weight[p.weight_index(o, i, ky, kx)];
                        for (int y = 0; y < h; ++y) {
                            const double* s = &padded[static_cast<std::size_t>(y + ky) * pw + kx];
                            double* d = dst + static_cast<std::size_t>(y) * w;
                            for (int x = 0; x < w; ++x) d[x] += wt * s[x];
                        }
                    }
                }
            }
        }
    }
}

void conv_backward(const ConvParams& p, std::span<const Tensor3* const> inputs, const Tensor3& grad_out,
                   ConvParams& grads, std::span<Tensor3* const> grad_inputs) {
    require(grad_inputs.size() == inputs.size(), ErrorKind::InvalidArgument, "gradient slots do not match inputs");
    require(grad_out.channels == p.out_channels, ErrorKind::DimensionMismatch, "gradient channel mismatch");
    const int h = grad_out.height;
    const int w = grad_out.width;
    const std::size_t plane = grad_out.plane_size();

    for (int o = 0; o < p.out_channels; ++o) {
        const double* g = grad_out.channel(o);
        double acc = 0.0;
        for (std::size_t k = 0; k < plane; ++k) acc += g[k];
        grads.bias[o] += acc;
    }

    std::vector<double> padded;
    std::vector<double> grad_padded;
    int i = 0;
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        const Tensor3* t = inputs[s];
        Tensor3* gin = grad_inputs[s];
        for (int ci = 0; ci < t->channels; ++ci, ++i) {
            const double* src = t->channel(ci);
            double* gsrc = gin != nullptr ? gin->channel(ci) : nullptr;
            if (p.kernel == 1) {
                for (int o = 0; o < p.out_channels; ++o) {
                    const double* g = grad_out.channel(o);
                    const std::size_t wi = p.weight_index(o, i, 0, 0);
                    double acc = 0.0;
                    for (std::size_t k = 0; k < plane; ++k) acc += g[k] * src[k];
                    grads.weight[wi] += acc;
                    if (gsrc != nullptr) {
                        const double wt = p.weight[wi];
                        for (std::size_t k = 0; k < plane; ++k) gsrc[k] += wt * g[k];
                    }
                }
                continue;
            }
            pad_channel(src, h, w, padded);
            const int pw = w + 2;
            if (gsrc != nullptr) grad_padded.assign(padded.size(), 0.0);
            for (int o = 0; o < p.out_channels; ++o) {
                const double* g = grad_out.channel(o);
                for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                        const std::size_t wi = p.weight_index(o, i, ky, kx);
                        const double wt = p.weight[wi];
                        double acc = 0.0;
                        for (int y = 0; y < h; ++y) {
                            const std::size_t off = static_cast<std::size_t>(y + ky) * pw + kx;
                            const double* sp = &padded[off];
                            const double* gr = g + static_cast<std::size_t>(y) * w;
                            for (int x = 0; x < w; ++x) acc += gr[x] * sp[x];
                            if (gsrc != nullptr) {
                                double* gp = &grad_padded[off];
                                for (int x = 0; x < w; ++x) gp[x] += wt * gr[x];
                            }
                        }
                        grads.weight[wi] += acc;
                    }
                }
            }
            if (gsrc != nullptr) unpad_accumulate(grad_padded, h, w, gsrc);
        }
    }
}

void relu_inplace(Tensor3& t) {
    for (double& v : t.data) v = v > 0.0 ? v : 0.0;
}

void relu_backward(const Tensor3& activated, Tensor3& grad) {
    for (std::size_t k = 0; k < grad.data.size(); ++k) {
        if (!(activated.data[k] > 0.0)) grad.data[k] = 0.0;
    }
}

ForwardTrace forward_trace(const RdnModel& model, const Tensor3& input) {
    require(input.channels == 1, ErrorKind::DimensionMismatch, "RDN expects a single-channel input");
    require(input.height >= 1 && input.width >= 1, ErrorKind::InvalidArgument, "empty RDN input");
    ForwardTrace tr;
    tr.input = input;

    const Tensor3* in0[] = {&tr.input};
    conv_forward(model.sfe1, in0, tr.shallow1);
    relu_inplace(tr.shallow1);
    const Tensor3* in1[] = {&tr.shallow1};
    conv_forward(model.sfe2, in1, tr.shallow2);
    relu_inplace(tr.shallow2);

    tr.rdbs.resize(model.rdbs.size());
    const Tensor3* prev = &tr.shallow2;
    for (std::size_t d = 0; d < model.rdbs.size(); ++d) {
        const RdbParams& rdb = model.rdbs[d];
        RdbTrace& bt = tr.rdbs[d];
        bt.features.resize(rdb.convs.size());
        std::vector<const Tensor3*> dense{prev};
        for (std::size_t c = 0; c < rdb.convs.size(); ++c) {
            conv_forward(rdb.convs[c], dense, bt.features[c]);
            relu_inplace(bt.features[c]);
            dense.push_back(&bt.features[c]);
        }
        conv_forward(rdb.fusion, dense, bt.output);
        for (std::size_t k = 0; k < bt.output.data.size(); ++k) bt.output.data[k] += prev->data[k];
        prev = &bt.output;
    }

    std::vector<const Tensor3*> block_outputs;
    for (const RdbTrace& bt : tr.rdbs) block_outputs.push_back(&bt.output);
    conv_forward(model.gff, block_outputs, tr.global_fused);

    tr.global_residual = tr.global_fused;
    for (std::size_t k = 0; k < tr.global_residual.data.size(); ++k) {
        tr.global_residual.data[k] += tr.shallow1.data[k];
    }

    // Upscaling is the identity at scale factor 1.
    const Tensor3* gr[] = {&tr.global_residual};
    conv_forward(model.final_conv, gr, tr.output);
    relu_inplace(tr.output);
    return tr;
}

// Same computation as forward_trace, dropping dense features once each
// block has fused them.
Tensor3 forward_raw(const RdnModel& model, const Tensor3& input) {
    require(input.channels == 1, ErrorKind::DimensionMismatch, "RDN expects a single-channel input");
    require(input.height >= 1 && input.width >= 1, ErrorKind::InvalidArgument, "empty RDN input");
    Tensor3 shallow1;
    Tensor3 shallow2;
    const Tensor3* in0[] = {&input};
    conv_forward(model.sfe1, in0, shallow1);
    relu_inplace(shallow1);
    const Tensor3* in1[] = {&shallow1};
    conv_forward(model.sfe2, in1, shallow2);
    relu_inplace(shallow2);

    std::vector<Tensor3> outputs(model.rdbs.size());
    const Tensor3* prev = &shallow2;
    for (std::size_t d = 0; d < model.rdbs.size(); ++d) {
        const RdbParams& rdb = model.rdbs[d];
        std::vector<Tensor3> features(rdb.convs.size());
        std::vector<const Tensor3*> dense{prev};
        for (std::size_t c = 0; c < rdb.convs.size(); ++c) {
            conv_forward(rdb.convs[c], dense, features[c]);
            relu_inplace(features[c]);
            dense.push_back(&features[c]);
        }
        conv_forward(rdb.fusion, dense, outputs[d]);
        for (std::size_t k = 0; k < outputs[d].data.size(); ++k) outputs[d].data[k] += prev->data[k];
        prev = &outputs[d];
    }
    shallow2 = Tensor3();

    std::vector<const Tensor3*> block_outputs;
    for (const Tensor3& t : outputs) block_outputs.push_back(&t);
    Tensor3 global;
    conv_forward(model.gff, block_outputs, global);
    outputs.clear();
    for (std::size_t k = 0; k < global.data.size(); ++k) global.data[k] += shallow1.data[k];

    const Tensor3* gr[] = {&global};
    Tensor3 out;
    conv_forward(model.final_conv, gr, out);
    relu_inplace(out);
    return out;
}

Tensor3 to_tensor(const Image& img) {
    require(img.channels == 1, ErrorKind::DimensionMismatch, "RDN expects a single-channel tile");
    Tensor3 t(1, img.height, img.width);
    std::copy(img.data.begin(), img.data.end(), t.data.begin());
    return t;
}

Image to_image(const Tensor3& t, bool clamp) {
    require(t.channels == 1, ErrorKind::DimensionMismatch, "expected a single-channel tensor");
    Image img(t.height, t.width, 1);
    for (std::size_t k = 0; k < t.data.size(); ++k) img.data[k] = static_cast<float>(t.data[k]);
    if (clamp) clamp_unit(img);
    return img;
}

Image forward(const RdnModel& model, const Image& tile) {
    return to_image(forward_raw(model, to_tensor(tile)), true);
}

}  // namespace deblur
