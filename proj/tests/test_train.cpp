#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <vector>

#include "deblur/error.hpp"
#include "deblur/psf.hpp"
#include "deblur/synthetic.hpp"
#include "deblur/train.hpp"
#include "test_helpers.hpp"

using namespace deblur;
using deblur::test::random_image;

namespace {

Tensor3 random_tensor(int c, int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor3 t(c, h, w);
    for (double& v : t.data) v = u(rng);
    return t;
}

void randomize_biases(RdnModel& m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.1);
    for (ConvParams* l : conv_layers(m))
        for (double& b : l->bias) b = n(rng);
}

struct GradCheck {
    int checked = 0;
    int failures = 0;
    double worst_rel = 0.0;
};

// Central differences over every parameter against the analytic gradient.
GradCheck check_all_gradients(RdnModel model, const Tensor3& input, const Tensor3& target, double h = 1e-3) {
    const BackwardResult analytic = backward(model, input, target);
    const auto grads = conv_layers(std::as_const(analytic.grads));
    const auto layers = conv_layers(model);
    GradCheck out;
    auto probe = [&](double& param, double g) {
        const double saved = param;
        param = saved + h;
        const double up = mse_loss(forward_raw(model, input), target);
        param = saved - h;
        const double down = mse_loss(forward_raw(model, input), target);
        param = saved;
        const double fd = (up - down) / (2 * h);
        const double abs_err = std::abs(fd - g);
        const double rel_err = abs_err / std::max(std::abs(fd), std::abs(g));
        ++out.checked;
        if (abs_err > 1e-7 && rel_err > 1e-4) {
            ++out.failures;
            out.worst_rel = std::max(out.worst_rel, rel_err);
        }
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
        for (std::size_t i = 0; i < layers[l]->weight.size(); ++i) probe(layers[l]->weight[i], grads[l]->weight[i]);
        for (std::size_t i = 0; i < layers[l]->bias.size(); ++i) probe(layers[l]->bias[i], grads[l]->bias[i]);
    }
    return out;
}

std::vector<TrainingPair> identity_pairs(int count, int size, std::uint64_t seed) {
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < count; ++i) {
        const Image img = synthetic::random_scene(size, size, seed + i);
        pairs.push_back({img, img});
    }
    return pairs;
}

}  // namespace

TEST_CASE("mse_loss values and gradient") {
    const Tensor3 a = random_tensor(1, 8, 8, 1);
    Tensor3 grad;
    CHECK(mse_loss(a, a, &grad) == 0.0);
    for (double g : grad.data) CHECK(g == 0.0);

    Tensor3 shifted = a;
    for (double& v : shifted.data) v += 0.1;
    CHECK(mse_loss(shifted, a) == doctest::Approx(0.01).epsilon(1e-12));

    const Tensor3 t = random_tensor(1, 8, 8, 2);
    Tensor3 p = random_tensor(1, 8, 8, 3);
    mse_loss(p, t, &grad);
    const double h = 1e-6;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        const double saved = p.data[i];
        p.data[i] = saved + h;
        const double up = mse_loss(p, t);
        p.data[i] = saved - h;
        const double down = mse_loss(p, t);
        p.data[i] = saved;
        CHECK(grad.data[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
    }
    CHECK_THROWS_AS(mse_loss(random_tensor(1, 8, 8, 1), random_tensor(1, 8, 7, 1)), Error);
    CHECK(mse_loss(Image(4, 4, 1, 0.3f), Image(4, 4, 1, 0.3f)) == 0.0);
}

TEST_CASE("backward matches finite differences for every parameter") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        CAPTURE(seed);
        RdnModel m = init_model(seed, RdnConfig::tiny());
        randomize_biases(m, seed + 100);
        const GradCheck r = check_all_gradients(m, random_tensor(1, 6, 6, seed + 200), random_tensor(1, 6, 6, seed + 300));
        CHECK(r.checked == static_cast<int>(parameter_count(m)));
        CAPTURE(r.worst_rel);
        CHECK(r.failures == 0);
    }
}

TEST_CASE("backward on a deeper config") {
    RdnModel m = init_model(9, RdnConfig{2, 3, 3});
    randomize_biases(m, 9);
    // Smaller step: with more channels some pre-activations sit within 1e-3
    // of a ReLU kink and central differences straddle it.
    const GradCheck r = check_all_gradients(m, random_tensor(1, 5, 7, 9), random_tensor(1, 5, 7, 10), 1e-5);
    CAPTURE(r.worst_rel);
    CHECK(r.failures == 0);
}

TEST_CASE("backward: dead network and zeroed block") {
    SUBCASE("zero model, zero target") {
        const RdnModel m = make_zero_model(RdnConfig::tiny());
        const BackwardResult r = backward(m, random_tensor(1, 6, 6, 4), Tensor3(1, 6, 6));
        CHECK(r.loss == 0.0);
        for (const ConvParams* l : conv_layers(std::as_const(r.grads))) {
            for (double g : l->weight) CHECK(g == 0.0);
            for (double g : l->bias) CHECK(g == 0.0);
        }
    }
    SUBCASE("identity block") {
        RdnModel m = init_model(5, RdnConfig{2, 2, 2});
        randomize_biases(m, 5);
        RdbParams& block = m.rdbs[0];
        for (ConvParams& c : block.convs) std::fill(c.weight.begin(), c.weight.end(), 0.0);
        std::fill(block.fusion.weight.begin(), block.fusion.weight.end(), 0.0);
        std::fill(block.fusion.bias.begin(), block.fusion.bias.end(), 0.0);
        const Tensor3 input = random_tensor(1, 6, 6, 5);
        const Tensor3 target = random_tensor(1, 6, 6, 6);
        const ForwardTrace tr = forward_trace(m, input);
        REQUIRE(tr.rdbs[0].output.data == tr.shallow2.data);

        const BackwardResult r = backward(m, input, target);
        const RdbParams& g = r.grads.rdbs[0];
        for (const ConvParams& c : g.convs)
            for (double v : c.weight) CHECK(v == 0.0);
        // Dense features are constant ReLU(bias); fusion weights reading an
        // all-zero feature carry no gradient, the rest do.
        int zero_channels = 0;
        for (int i = 2; i < 6; ++i) {
            const Tensor3& f = tr.rdbs[0].features[(i - 2) / 2];
            const int ch = (i - 2) % 2;
            bool all_zero = true;
            for (int y = 0; y < 6; ++y)
                for (int x = 0; x < 6; ++x) all_zero = all_zero && f.at(ch, y, x) == 0.0;
            zero_channels += all_zero;
            for (int o = 0; o < 2; ++o) {
                CHECK((g.fusion.weight[g.fusion.weight_index(o, i, 0, 0)] == 0.0) == all_zero);
            }
        }
        CHECK(zero_channels > 0);
        CHECK(zero_channels < 4);
        const GradCheck fd = check_all_gradients(m, input, target, 1e-5);
        CHECK(fd.failures == 0);
    }
}

TEST_CASE("adam update arithmetic") {
    TrainConfig cfg;
    std::vector<double> p{0.5}, g{1.0}, m{0.0}, v{0.0};
    adam_update(p, g, m, v, 1, 1e-4, cfg);
    CHECK(p[0] - 0.5 == doctest::Approx(-1e-4 / (1 + 1e-8)).epsilon(1e-9));
    CHECK(m[0] == doctest::Approx(0.1));
    CHECK(v[0] == doctest::Approx(0.001));

    RdnModel model = init_model(1, RdnConfig::tiny());
    const RdnModel before = model;
    AdamState state = make_adam_state(model);
    adam_step(model, zero_gradients(model), state, 1e-4, cfg);
    adam_step(model, zero_gradients(model), state, 1e-4, cfg);
    CHECK(state.step == 2);
    const auto a = conv_layers(std::as_const(model));
    const auto b = conv_layers(before);
    for (std::size_t l = 0; l < a.size(); ++l) {
        CHECK(a[l]->weight == b[l]->weight);
        CHECK(a[l]->bias == b[l]->bias);
    }

    state.m.assign(state.m.size(), 0.5);
    state.v.assign(state.v.size(), 0.5);
    adam_step(model, zero_gradients(model), state, 1e-4, cfg);
    for (std::size_t i = 0; i < state.m.size(); ++i) {
        CHECK(state.m[i] == doctest::Approx(0.45));
        CHECK(state.v[i] == doctest::Approx(0.4995));
    }
}

TEST_CASE("adam step rejects non-finite gradients") {
    RdnModel model = init_model(1, RdnConfig::tiny());
    AdamState state = make_adam_state(model);
    RdnGradients g = zero_gradients(model);
    g.gff.bias[0] = std::nan("");
    try {
        adam_step(model, g, state, 1e-4, TrainConfig{});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Training);
    }
}

TEST_CASE("learning rate schedule") {
    TrainConfig cfg;
    CHECK(lr_at_epoch(cfg, 0) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(lr_at_epoch(cfg, 1) == doctest::Approx(9.5e-5).epsilon(1e-12));
    CHECK(lr_at_epoch(cfg, 10) == doctest::Approx(5.987e-5).epsilon(1e-4));
    for (int e = 0; e < 100; ++e) CHECK(lr_at_epoch(cfg, e + 1) < lr_at_epoch(cfg, e));

    cfg.lr_decay = 0.0;
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg = TrainConfig{};
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg = TrainConfig{};
    cfg.validation_fraction = 1.0;
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(validate(cfg), Error);
}

TEST_CASE("fixed batch loss decreases over the first Adam steps") {
    const std::vector<TrainingPair> batch = identity_pairs(8, 16, 40);
    const TrainConfig cfg;
    // Seed 2 initializes a tiny model whose output ReLU is closed everywhere:
    // zero gradient, so no step can move it.
    {
        const RdnModel dead = init_model(2, RdnConfig::tiny());
        for (const auto& p : batch) {
            const BackwardResult r = backward(dead, p.input, p.target);
            for (const ConvParams* l : conv_layers(std::as_const(r.grads)))
                for (double g : l->weight) REQUIRE(g == 0.0);
        }
    }
    for (std::uint64_t seed : {1u, 3u, 4u}) {
        CAPTURE(seed);
        RdnModel m = init_model(seed, RdnConfig::tiny());
        AdamState state = make_adam_state(m);
        auto batch_loss = [&] {
            double l = 0;
            for (const auto& p : batch) l += pair_loss(m, p.input, p.target);
            return l / batch.size();
        };
        double prev = batch_loss();
        for (int step = 0; step < 5; ++step) {
            RdnGradients g = zero_gradients(m);
            for (const auto& p : batch) accumulate(g, backward(m, p.input, p.target).grads, 1.0 / batch.size());
            adam_step(m, g, state, cfg.lr_initial, cfg);
            const double now = batch_loss();
            CHECK(now < prev);
            prev = now;
        }
    }
}

TEST_CASE("training on the identity task reduces loss") {
    const std::vector<TrainingPair> data = identity_pairs(20, 16, 7);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.lr_initial = 1e-3;
    cfg.seed = 3;
    std::vector<EpochReport> reports;
    const TrainResult r = train(init_model(3, RdnConfig::tiny()), data, cfg,
                                [&](const EpochReport& e) { reports.push_back(e); });
    REQUIRE(r.curve.size() == 6);
    CHECK(reports.size() == 6);
    CHECK(r.curve.train_loss.back() < r.curve.train_loss.front());
    CHECK(r.curve.val_loss[r.best_epoch] == *std::min_element(r.curve.val_loss.begin(), r.curve.val_loss.end()));
    for (std::size_t e = 0; e < r.curve.size(); ++e) {
        CHECK(std::isfinite(r.curve.train_loss[e]));
        CHECK(std::isfinite(r.curve.val_loss[e]));
    }
    double val = 0;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int k = 0; k < 2; ++k) val += pair_loss(r.model, data[order[k]].input, data[order[k]].target);
    CHECK(val / 2 == doctest::Approx(r.curve.val_loss[r.best_epoch]).epsilon(1e-12));
}

TEST_CASE("training is deterministic") {
    std::vector<TrainingPair> data;
    for (int i = 0; i < 12; ++i) {
        const Image img = synthetic::random_scene(16, 16, 100 + i);
        data.push_back({blur(img, 1.0), img});
    }
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.seed = 17;
    const TrainResult a = train(init_model(17, RdnConfig::tiny()), data, cfg);
    const TrainResult b = train(init_model(17, RdnConfig::tiny()), data, cfg);
    CHECK(a.curve.train_loss == b.curve.train_loss);
    CHECK(a.curve.val_loss == b.curve.val_loss);
    const auto la = conv_layers(a.model), lb = conv_layers(b.model);
    for (std::size_t l = 0; l < la.size(); ++l) {
        CHECK(la[l]->weight == lb[l]->weight);
        CHECK(la[l]->bias == lb[l]->bias);
    }
    cfg.seed = 18;
    const TrainResult c = train(init_model(17, RdnConfig::tiny()), data, cfg);
    CHECK(c.curve.val_loss != a.curve.val_loss);
}

TEST_CASE("train input validation") {
    const RdnModel m = init_model(1, RdnConfig::tiny());
    CHECK_THROWS_AS(train(m, std::vector<TrainingPair>{}, TrainConfig{}), Error);
    const std::vector<TrainingPair> mismatch{{Image(8, 8, 1), Image(8, 9, 1)}};
    CHECK_THROWS_AS(train(m, mismatch, TrainConfig{}), Error);
    const std::vector<TrainingPair> rgb{{Image(8, 8, 3), Image(8, 8, 3)}};
    CHECK_THROWS_AS(train(m, rgb, TrainConfig{}), Error);
}

TEST_CASE("loss curve CSV and checkpoint rule") {
    LossCurve c;
    c.train_loss = {0.5, 0.25, 0.125, 0.1};
    c.val_loss = {0.6, 0.3, 0.2, 0.21};
    CHECK(checkpoint_rule_holds(c));
    c.val_loss.back() = 0.23;
    CHECK_FALSE(checkpoint_rule_holds(c));
    c.val_loss.back() = std::nan("");
    CHECK_FALSE(checkpoint_rule_holds(c));
    c.val_loss.back() = 0.19;

    const auto dir = deblur::test::scratch_dir("loss_curve");
    write_loss_curve_csv(c, dir / "curve.csv");
    std::ifstream in(dir / "curve.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "epoch,train_loss,val_loss");
    const LossCurve back = read_loss_curve_csv(dir / "curve.csv");
    CHECK(back.train_loss == c.train_loss);
    CHECK(back.val_loss == c.val_loss);
}
