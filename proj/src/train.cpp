#include "deblur/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "deblur/error.hpp"
#include "deblur/parallel.hpp"

namespace deblur {

void validate(const TrainConfig& cfg) {
    require(cfg.batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be positive");
    require(cfg.lr_initial > 0.0, ErrorKind::InvalidArgument, "initial learning rate must be positive");
    require(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0, ErrorKind::InvalidArgument, "lr decay must be in (0, 1]");
    require(cfg.beta1 > 0.0 && cfg.beta1 < 1.0 && cfg.beta2 > 0.0 && cfg.beta2 < 1.0, ErrorKind::InvalidArgument,
            "Adam betas must be in (0, 1)");
    require(cfg.eps_adam > 0.0, ErrorKind::InvalidArgument, "Adam epsilon must be positive");
    require(cfg.epochs >= 0, ErrorKind::InvalidArgument, "epoch count must be non-negative");
    require(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0, ErrorKind::InvalidArgument,
            "validation fraction must be in (0, 1)");
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    require(epoch >= 0, ErrorKind::InvalidArgument, "epoch must be non-negative");
    return cfg.lr_initial * std::pow(cfg.lr_decay, epoch);
}

double mse_loss(const Tensor3& pred, const Tensor3& target, Tensor3* grad) {
    require(pred.channels == target.channels && pred.height == target.height && pred.width == target.width,
            ErrorKind::DimensionMismatch, "prediction and target differ in shape");
    require(!pred.data.empty(), ErrorKind::InvalidArgument, "empty prediction");
    const double n = static_cast<double>(pred.data.size());
    if (grad != nullptr) *grad = Tensor3(pred.channels, pred.height, pred.width);
    double acc = 0.0;
    for (std::size_t k = 0; k < pred.data.size(); ++k) {
        const double d = pred.data[k] - target.data[k];
        acc += d * d;
        if (grad != nullptr) grad->data[k] = 2.0 * d / n;
    }
    return acc / n;
}

double mse_loss(const Image& pred, const Image& target) {
    require(pred.channels == 1 && target.channels == 1, ErrorKind::InvalidArgument,
            "mse_loss expects single-channel images");
    return mse_loss(to_tensor(pred), to_tensor(target));
}

RdnGradients zero_gradients(const RdnModel& model) { return make_zero_model(model.config); }

void accumulate(RdnGradients& into, const RdnGradients& from, double scale) {
    auto dst = conv_layers(into);
    const auto src = conv_layers(from);
    require(dst.size() == src.size(), ErrorKind::DimensionMismatch, "gradient layouts differ");
    for (std::size_t k = 0; k < dst.size(); ++k) {
        for (std::size_t i = 0; i < dst[k]->weight.size(); ++i) dst[k]->weight[i] += scale * src[k]->weight[i];
        for (std::size_t i = 0; i < dst[k]->bias.size(); ++i) dst[k]->bias[i] += scale * src[k]->bias[i];
    }
}

namespace {

Tensor3 zeros_like(const Tensor3& t) { return Tensor3(t.channels, t.height, t.width); }

void add_into(Tensor3& dst, const Tensor3& src) {
    for (std::size_t k = 0; k < dst.data.size(); ++k) dst.data[k] += src.data[k];
}

}  // namespace

BackwardResult backward(const RdnModel& model, const Tensor3& input, const Tensor3& target) {
    const ForwardTrace tr = forward_trace(model, input);
    BackwardResult result;
    result.grads = zero_gradients(model);
    RdnGradients& g = result.grads;

    Tensor3 g_out;
    result.loss = mse_loss(tr.output, target, &g_out);
    relu_backward(tr.output, g_out);

    // Final conv (identity upscale) -> global residual.
    Tensor3 g_global = zeros_like(tr.global_residual);
    {
        const Tensor3* in[] = {&tr.global_residual};
        Tensor3* gin[] = {&g_global};
        conv_backward(model.final_conv, in, g_out, g.final_conv, gin);
    }

    // F_GR = F_{-1} + F_GF: the gradient fans out to both terms.
    Tensor3 g_shallow1 = g_global;
    const std::size_t depth = model.rdbs.size();
    std::vector<Tensor3> g_block_out(depth);
    for (std::size_t d = 0; d < depth; ++d) g_block_out[d] = zeros_like(tr.rdbs[d].output);
    {
        std::vector<const Tensor3*> in;
        std::vector<Tensor3*> gin;
        for (std::size_t d = 0; d < depth; ++d) {
            in.push_back(&tr.rdbs[d].output);
            gin.push_back(&g_block_out[d]);
        }
        conv_backward(model.gff, in, g_global, g.gff, gin);
    }

    Tensor3 g_shallow2 = zeros_like(tr.shallow2);
    for (std::size_t d = depth; d-- > 0;) {
        const RdbParams& rdb = model.rdbs[d];
        const RdbTrace& bt = tr.rdbs[d];
        RdbParams& grdb = g.rdbs[d];
        const Tensor3& block_in = d == 0 ? tr.shallow2 : tr.rdbs[d - 1].output;
        Tensor3& g_block_in = d == 0 ? g_shallow2 : g_block_out[d - 1];

        // F_d = F_{d-1} + F_{d,LF}
        const Tensor3& g_fd = g_block_out[d];
        add_into(g_block_in, g_fd);

        std::vector<Tensor3> g_feat(bt.features.size());
        for (std::size_t c = 0; c < bt.features.size(); ++c) g_feat[c] = zeros_like(bt.features[c]);

        std::vector<const Tensor3*> dense{&block_in};
        std::vector<Tensor3*> g_dense{&g_block_in};
        for (std::size_t c = 0; c < bt.features.size(); ++c) {
            dense.push_back(&bt.features[c]);
            g_dense.push_back(&g_feat[c]);
        }
        conv_backward(rdb.fusion, dense, g_fd, grdb.fusion, g_dense);

        for (std::size_t c = bt.features.size(); c-- > 0;) {
            relu_backward(bt.features[c], g_feat[c]);
            const std::span<const Tensor3* const> in(dense.data(), c + 1);
            const std::span<Tensor3* const> gin(g_dense.data(), c + 1);
            conv_backward(rdb.convs[c], in, g_feat[c], grdb.convs[c], gin);
        }
    }

    relu_backward(tr.shallow2, g_shallow2);
    {
        const Tensor3* in[] = {&tr.shallow1};
        Tensor3* gin[] = {&g_shallow1};
        conv_backward(model.sfe2, in, g_shallow2, g.sfe2, gin);
    }
    relu_backward(tr.shallow1, g_shallow1);
    {
        const Tensor3* in[] = {&tr.input};
        Tensor3* gin[] = {nullptr};
        conv_backward(model.sfe1, in, g_shallow1, g.sfe1, gin);
    }
    return result;
}

BackwardResult backward(const RdnModel& model, const Image& tile, const Image& target) {
    require(tile.same_shape(target), ErrorKind::DimensionMismatch, "tile and target differ in shape");
    return backward(model, to_tensor(tile), to_tensor(target));
}

double pair_loss(const RdnModel& model, const Image& tile, const Image& target) {
    require(tile.same_shape(target), ErrorKind::DimensionMismatch, "tile and target differ in shape");
    return mse_loss(forward_raw(model, to_tensor(tile)), to_tensor(target));
}

AdamState make_adam_state(const RdnModel& model) {
    AdamState s;
    const std::size_t n = parameter_count(model);
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    return s;
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 std::int64_t step, double lr, const TrainConfig& cfg) {
    require(params.size() == grads.size() && m.size() == params.size() && v.size() == params.size(),
            ErrorKind::DimensionMismatch, "Adam buffers differ in length");
    require(step >= 1, ErrorKind::InvalidArgument, "Adam step count starts at 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps_adam);
    }
}

void adam_step(RdnModel& model, const RdnGradients& grads, AdamState& state, double lr, const TrainConfig& cfg) {
    auto layers = conv_layers(model);
    const auto glayers = conv_layers(grads);
    require(layers.size() == glayers.size(), ErrorKind::DimensionMismatch, "gradient layout does not match model");
    const std::size_t n = parameter_count(model);
    require(state.m.size() == n && state.v.size() == n, ErrorKind::DimensionMismatch,
            "Adam state does not match model");

    std::size_t layer_index = 0;
    for (const ConvParams* gl : glayers) {
        for (const auto* buf : {&gl->weight, &gl->bias}) {
            for (double gv : *buf) {
                require(std::isfinite(gv), ErrorKind::Training,
                        "non-finite gradient in layer " + std::to_string(layer_index) + " at Adam step " +
                            std::to_string(state.step + 1));
            }
        }
        ++layer_index;
    }

    ++state.step;
    std::size_t offset = 0;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        for (auto [p, gp] : {std::pair{&layers[k]->weight, &glayers[k]->weight},
                             std::pair{&layers[k]->bias, &glayers[k]->bias}}) {
            require(p->size() == gp->size(), ErrorKind::DimensionMismatch, "gradient tensor size mismatch");
            const std::size_t len = p->size();
            adam_update(*p, *gp, std::span(state.m).subspan(offset, len), std::span(state.v).subspan(offset, len),
                        state.step, lr, cfg);
            offset += len;
        }
    }
    quantize_to_f32(model);
}

void write_loss_curve_csv(const LossCurve& curve, const std::filesystem::path& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
    out << "epoch,train_loss,val_loss\n";
    out.precision(9);
    for (std::size_t e = 0; e < curve.size(); ++e) {
        out << e << ',' << curve.train_loss[e] << ',' << curve.val_loss[e] << '\n';
    }
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

LossCurve read_loss_curve_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line == "epoch,train_loss,val_loss", ErrorKind::Format,
            "loss curve must start with 'epoch,train_loss,val_loss'");
    LossCurve curve;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        std::size_t epoch = 0;
        double tl = 0.0;
        double vl = 0.0;
        require(static_cast<bool>(row >> epoch >> tl >> vl) && epoch == curve.size(), ErrorKind::Format,
                "malformed loss curve row: " + line);
        curve.train_loss.push_back(tl);
        curve.val_loss.push_back(vl);
    }
    return curve;
}

bool checkpoint_rule_holds(const LossCurve& curve, double max_rise) {
    if (curve.val_loss.empty()) return false;
    for (std::size_t e = 0; e < curve.size(); ++e) {
        if (!std::isfinite(curve.train_loss[e]) || !std::isfinite(curve.val_loss[e])) return false;
    }
    const auto best = std::min_element(curve.val_loss.begin(), curve.val_loss.end());
    return std::all_of(best, curve.val_loss.end(), [&](double v) { return v <= (1.0 + max_rise) * *best; });
}

namespace {

double mean_loss(const RdnModel& model, std::span<const TrainingPair> data, const std::vector<std::size_t>& idx) {
    std::vector<double> losses(idx.size());
    parallel_for(idx.size(), [&](std::size_t k) {
        losses[k] = pair_loss(model, data[idx[k]].input, data[idx[k]].target);
    });
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train(const RdnModel& initial, std::span<const TrainingPair> dataset, const TrainConfig& cfg,
                  const std::function<void(const EpochReport&)>& on_epoch) {
    validate(cfg);
    validate_shapes(initial);
    require(!dataset.empty(), ErrorKind::InvalidArgument, "training dataset is empty");
    for (const TrainingPair& p : dataset) {
        require(p.input.channels == 1 && p.input.same_shape(p.target), ErrorKind::DimensionMismatch,
                "training pairs must be single-channel with matching shapes");
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    if (dataset.size() == 1) {
        train_idx = order;
        val_idx = order;
    } else {
        const auto n_val = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(dataset.size()))), 1,
            dataset.size() - 1);
        val_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
        train_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    }

    TrainResult result;
    RdnModel model = initial;
    quantize_to_f32(model);
    AdamState adam = make_adam_state(model);

    result.curve.train_loss.push_back(mean_loss(model, dataset, train_idx));
    result.curve.val_loss.push_back(mean_loss(model, dataset, val_idx));
    result.model = model;
    result.best_epoch = 0;
    double best_val = result.curve.val_loss.back();
    if (on_epoch) on_epoch({0, result.curve.train_loss.back(), best_val, 0.0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        double epoch_loss = 0.0;
        int batch_no = 0;
        for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size, ++batch_no) {
            const std::size_t count = std::min<std::size_t>(cfg.batch_size, train_idx.size() - start);
            std::vector<BackwardResult> parts(count);
            parallel_for(count, [&](std::size_t k) {
                const TrainingPair& p = dataset[train_idx[start + k]];
                parts[k] = backward(model, p.input, p.target);
            });
            // Reduction in sample order keeps results independent of scheduling.
            RdnGradients grads = zero_gradients(model);
            double batch_loss = 0.0;
            for (const BackwardResult& part : parts) {
                accumulate(grads, part.grads, 1.0 / static_cast<double>(count));
                batch_loss += part.loss / static_cast<double>(count);
            }
            require(std::isfinite(batch_loss), ErrorKind::Training,
                    "non-finite loss at epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(batch_no));
            adam_step(model, grads, adam, lr, cfg);
            epoch_loss += batch_loss * static_cast<double>(count);
        }
        const double train_loss = epoch_loss / static_cast<double>(train_idx.size());
        const double val_loss = mean_loss(model, dataset, val_idx);
        require(std::isfinite(val_loss), ErrorKind::Training,
                "non-finite validation loss at epoch " + std::to_string(epoch + 1));
        result.curve.train_loss.push_back(train_loss);
        result.curve.val_loss.push_back(val_loss);
        if (val_loss < best_val) {
            best_val = val_loss;
            result.model = model;
            result.best_epoch = epoch + 1;
        }
        if (on_epoch) on_epoch({epoch + 1, train_loss, val_loss, lr});
    }
    result.model.meta = initial.meta;
    return result;
}

}  // namespace deblur
