#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "deblur/image.hpp"
#include "deblur/rdn.hpp"

namespace deblur {

struct TrainConfig {
    int batch_size = 8;
    double lr_initial = 1e-4;
    double lr_decay = 0.95;  // applied once per epoch
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    int epochs = 100;
    std::uint64_t seed = 0;
    double validation_fraction = 0.1;
};

void validate(const TrainConfig& cfg);

/// lr_initial * lr_decay^epoch
double lr_at_epoch(const TrainConfig& cfg, int epoch);

/// Mean squared error; when `grad` is non-null it receives 2 (pred - target) / N.
double mse_loss(const Tensor3& pred, const Tensor3& target, Tensor3* grad = nullptr);
double mse_loss(const Image& pred, const Image& target);

/// Gradients share the model's layout; meta is unused.
using RdnGradients = RdnModel;

RdnGradients zero_gradients(const RdnModel& model);
void accumulate(RdnGradients& into, const RdnGradients& from, double scale = 1.0);

struct BackwardResult {
    double loss = 0.0;
    RdnGradients grads;
};

/// Exact reverse-mode gradient of mse_loss(unclamped network output, target).
BackwardResult backward(const RdnModel& model, const Image& tile, const Image& target);
BackwardResult backward(const RdnModel& model, const Tensor3& input, const Tensor3& target);

/// Loss the trainer optimizes for one pair (unclamped output).
double pair_loss(const RdnModel& model, const Image& tile, const Image& target);

struct AdamState {
    std::int64_t step = 0;
    std::vector<double> m;  // flattened in conv_layers() order, weight then bias
    std::vector<double> v;
};

AdamState make_adam_state(const RdnModel& model);

/// Bias-corrected Adam on raw buffers; `step` is the 1-based step count.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, std::int64_t step, double lr, const TrainConfig& cfg);

/// One Adam step over all model parameters. Throws on non-finite gradients.
/// Parameters are rounded back to f32 afterwards.
void adam_step(RdnModel& model, const RdnGradients& grads, AdamState& state, double lr, const TrainConfig& cfg);

struct TrainingPair {
    Image input;   // blurred
    Image target;  // ground truth
};

/// Entry 0 is the untrained model; entry e > 0 follows epoch e.
struct LossCurve {
    std::vector<double> train_loss;
    std::vector<double> val_loss;

    std::size_t size() const { return train_loss.size(); }
};

void write_loss_curve_csv(const LossCurve& curve, const std::filesystem::path& path);
LossCurve read_loss_curve_csv(const std::filesystem::path& path);

/// True when the validation loss never rises more than max_rise above its
/// minimum after reaching it.
bool checkpoint_rule_holds(const LossCurve& curve, double max_rise = 0.10);

struct TrainResult {
    RdnModel model;  // best-validation checkpoint
    LossCurve curve;
    int best_epoch = 0;
};

struct EpochReport {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

/// Seeded shuffled mini-batches, Adam with per-epoch exponential decay,
/// seeded hold-out validation and best-validation checkpointing.
TrainResult train(const RdnModel& initial, std::span<const TrainingPair> dataset, const TrainConfig& cfg,
                  const std::function<void(const EpochReport&)>& on_epoch = {});

}  // namespace deblur
