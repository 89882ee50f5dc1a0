#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <utility>
#include <vector>

#include "deblur/error.hpp"
#include "deblur/rdn.hpp"
#include "test_helpers.hpp"

using namespace deblur;
using deblur::test::random_image;

namespace {

using Maps = std::vector<std::vector<std::vector<double>>>;  // [channel][y][x]

// Direct-summation convolution with replicate padding over a list of maps.
Maps conv_oracle(const ConvParams& p, const Maps& in, bool relu) {
    const int h = static_cast<int>(in[0].size());
    const int w = static_cast<int>(in[0][0].size());
    const int r = p.kernel / 2;
    Maps out(p.out_channels, std::vector<std::vector<double>>(h, std::vector<double>(w, 0.0)));
    for (int o = 0; o < p.out_channels; ++o) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = p.bias[o];
                for (int i = 0; i < p.in_channels; ++i) {
                    for (int ky = 0; ky < p.kernel; ++ky) {
                        for (int kx = 0; kx < p.kernel; ++kx) {
                            const int sy = std::clamp(y + ky - r, 0, h - 1);
                            const int sx = std::clamp(x + kx - r, 0, w - 1);
                            acc += p.weight[p.weight_index(o, i, ky, kx)] * in[i][sy][sx];
                        }
                    }
                }
                out[o][y][x] = relu ? std::max(acc, 0.0) : acc;
            }
        }
    }
    return out;
}

Maps concat(const Maps& a, const Maps& b) {
    Maps r = a;
    r.insert(r.end(), b.begin(), b.end());
    return r;
}

Maps add(const Maps& a, const Maps& b) {
    Maps r = a;
    for (std::size_t c = 0; c < r.size(); ++c)
        for (std::size_t y = 0; y < r[c].size(); ++y)
            for (std::size_t x = 0; x < r[c][y].size(); ++x) r[c][y][x] += b[c][y][x];
    return r;
}

Maps rdn_oracle(const RdnModel& m, const Image& img) {
    Maps in(1, std::vector<std::vector<double>>(img.height, std::vector<double>(img.width)));
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) in[0][y][x] = img.at(y, x);
    const Maps f_m1 = conv_oracle(m.sfe1, in, true);
    Maps prev = conv_oracle(m.sfe2, f_m1, true);
    Maps all_blocks;
    for (const RdbParams& rdb : m.rdbs) {
        Maps dense = prev;
        for (const ConvParams& c : rdb.convs) dense = concat(dense, conv_oracle(c, dense, true));
        prev = add(conv_oracle(rdb.fusion, dense, false), prev);
        all_blocks = concat(all_blocks, prev);
    }
    const Maps f_gr = add(f_m1, conv_oracle(m.gff, all_blocks, false));
    return conv_oracle(m.final_conv, f_gr, true);
}

void randomize_biases(RdnModel& m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.1);
    for (ConvParams* l : conv_layers(m))
        for (double& b : l->bias) b = static_cast<float>(n(rng));
}

double stddev(const std::vector<double>& v) {
    double mean = 0, sq = 0;
    for (double x : v) mean += x;
    mean /= v.size();
    for (double x : v) sq += (x - mean) * (x - mean);
    return std::sqrt(sq / v.size());
}

}  // namespace

TEST_CASE("init_model is deterministic in the seed") {
    const RdnModel a = init_model(7, RdnConfig::tiny());
    const RdnModel b = init_model(7, RdnConfig::tiny());
    const RdnModel c = init_model(8, RdnConfig::tiny());
    const auto la = conv_layers(a), lb = conv_layers(b), lc = conv_layers(c);
    bool any_diff = false;
    for (std::size_t i = 0; i < la.size(); ++i) {
        CHECK(la[i]->weight == lb[i]->weight);
        CHECK(la[i]->bias == lb[i]->bias);
        any_diff = any_diff || la[i]->weight != lc[i]->weight;
    }
    CHECK(any_diff);
    CHECK_THROWS_AS(init_model(1, RdnConfig{0, 1, 1}), Error);
    CHECK_THROWS_AS(init_model(1, RdnConfig{1, 0, 1}), Error);
    CHECK_THROWS_AS(init_model(1, RdnConfig{1, 1, 0}), Error);
}

TEST_CASE("He initialization scale") {
    const RdnModel m = init_model(3);
    std::vector<double> first_dense;
    for (const RdbParams& rdb : m.rdbs) {
        CHECK(rdb.convs[0].in_channels == 32);
        first_dense.insert(first_dense.end(), rdb.convs[0].weight.begin(), rdb.convs[0].weight.end());
        for (double b : rdb.convs[0].bias) CHECK(b == 0.0);
    }
    CHECK(stddev(first_dense) == doctest::Approx(std::sqrt(2.0 / (32 * 9))).epsilon(0.02));
    CHECK(std::sqrt(2.0 / (32 * 9)) == doctest::Approx(0.0833).epsilon(1e-3));
    CHECK(stddev(m.sfe2.weight) == doctest::Approx(std::sqrt(2.0 / 288)).epsilon(0.03));
    CHECK(stddev(m.rdbs[0].fusion.weight) == doctest::Approx(std::sqrt(2.0 / 192)).epsilon(0.03));
    for (const ConvParams* l : conv_layers(m))
        for (double v : l->weight) REQUIRE(static_cast<double>(static_cast<float>(v)) == v);
}

TEST_CASE("parameter count matches a hand count of layer shapes") {
    // sfe1 1->32 3x3, sfe2 32->32 3x3
    std::size_t expected = (32 * 1 * 9 + 32) + (32 * 32 * 9 + 32);
    for (int d = 0; d < 4; ++d) {
        for (int in : {32, 64, 96, 128, 160}) expected += 32 * in * 9 + 32;
        expected += 32 * 192 + 32;  // local fusion
    }
    expected += 32 * 128 + 32;  // global fusion
    expected += 1 * 32 * 9 + 1;
    CHECK(expected == 592289);
    CHECK(parameter_count(init_model(0)) == expected);
    CHECK(parameter_count(make_zero_model(RdnConfig::tiny())) ==
          (2 * 9 + 2) + (2 * 2 * 9 + 2) + (2 * 2 * 9 + 2) + (2 * 4 * 9 + 2) + (2 * 6 + 2) + (2 * 2 + 2) + (18 + 1));
}

TEST_CASE("layer shapes follow the dense block algebra") {
    const RdnModel m = make_zero_model(RdnConfig::full());
    CHECK(m.rdbs.size() == 4);
    for (const RdbParams& rdb : m.rdbs) {
        REQUIRE(rdb.convs.size() == 5);
        for (int c = 0; c < 5; ++c) {
            CHECK(rdb.convs[c].in_channels == 32 * (c + 1));
            CHECK(rdb.convs[c].out_channels == 32);
            CHECK(rdb.convs[c].kernel == 3);
        }
        CHECK(rdb.fusion.in_channels == 192);
        CHECK(rdb.fusion.kernel == 1);
    }
    CHECK(m.gff.in_channels == 128);
    CHECK(m.gff.kernel == 1);
    CHECK(m.final_conv.out_channels == 1);
    CHECK_NOTHROW(validate_shapes(m));

    RdnModel bad = m;
    bad.rdbs[2].fusion = ConvParams(32, 160, 1);
    CHECK_THROWS_AS(validate_shapes(bad), Error);
    bad = m;
    bad.rdbs.pop_back();
    CHECK_THROWS_AS(validate_shapes(bad), Error);
    bad = m;
    bad.gff.weight[5] = std::nan("");
    CHECK_THROWS_AS(validate_shapes(bad), Error);
}

TEST_CASE("forward preserves tile shape") {
    const RdnModel m = init_model(1, RdnConfig{1, 2, 4});
    for (int size : {64, 256}) {
        const Image out = forward(m, random_image(size, size, 1, size));
        CHECK(out.height == size);
        CHECK(out.width == size);
        CHECK(out.channels == 1);
        for (float v : out.data) REQUIRE((v >= 0.0f && v <= 1.0f));
    }
    CHECK(forward(m, random_image(9, 13, 1, 2)).width == 13);
    const Image full = forward(init_model(2), random_image(64, 64, 1, 3));
    CHECK(full.height == 64);
    CHECK(full.width == 64);
    CHECK_THROWS_AS(forward(m, random_image(8, 8, 3, 1)), Error);
}

TEST_CASE("all-zero model outputs zeros") {
    const RdnModel m = make_zero_model(RdnConfig::tiny());
    const Image out = forward(m, random_image(16, 16, 1, 4));
    for (float v : out.data) CHECK(v == 0.0f);
}

TEST_CASE("forward matches a nested-loop oracle") {
    for (const RdnConfig cfg : {RdnConfig{1, 1, 2}, RdnConfig{2, 2, 3}}) {
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            RdnModel m = init_model(seed, cfg);
            randomize_biases(m, seed + 10);
            const Image img = random_image(cfg.blocks == 1 ? 4 : 7, cfg.blocks == 1 ? 4 : 5, 1, seed + 20);
            const Maps expected = rdn_oracle(m, img);
            const Tensor3 got = forward_raw(m, to_tensor(img));
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) CHECK(std::abs(got.at(0, y, x) - expected[0][y][x]) < 1e-5);
            const Image clamped = forward(m, img);
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x)
                    CHECK(clamped.at(y, x) == doctest::Approx(std::clamp(expected[0][y][x], 0.0, 1.0)).epsilon(1e-5));
        }
    }
}

TEST_CASE("forward is deterministic") {
    const RdnModel m = init_model(5, RdnConfig{2, 3, 8});
    const Image img = random_image(40, 33, 1, 5);
    CHECK(forward(m, img) == forward(m, img));
    CHECK(forward_raw(m, to_tensor(img)).data == forward_trace(m, to_tensor(img)).output.data);
}

TEST_CASE("zeroed residual dense block is the identity") {
    RdnModel m = init_model(11, RdnConfig{3, 2, 4});
    randomize_biases(m, 4);
    RdbParams& block = m.rdbs[1];
    for (ConvParams& c : block.convs) std::fill(c.weight.begin(), c.weight.end(), 0.0);
    std::fill(block.fusion.weight.begin(), block.fusion.weight.end(), 0.0);
    std::fill(block.fusion.bias.begin(), block.fusion.bias.end(), 0.0);
    const ForwardTrace tr = forward_trace(m, to_tensor(random_image(12, 10, 1, 6)));
    CHECK(tr.rdbs[1].output.data == tr.rdbs[0].output.data);
    CHECK(tr.rdbs[2].output.data != tr.rdbs[1].output.data);
}

TEST_CASE("zeroed blocks and global fusion leave the shallow residual") {
    RdnModel m = init_model(12, RdnConfig{2, 2, 4});
    for (RdbParams& rdb : m.rdbs) {
        for (ConvParams& c : rdb.convs) std::fill(c.weight.begin(), c.weight.end(), 0.0);
        std::fill(rdb.fusion.weight.begin(), rdb.fusion.weight.end(), 0.0);
    }
    std::fill(m.gff.weight.begin(), m.gff.weight.end(), 0.0);
    const ForwardTrace tr = forward_trace(m, to_tensor(random_image(10, 10, 1, 7)));
    CHECK(tr.global_residual.data == tr.shallow1.data);
}

TEST_CASE("weights round trip") {
    const auto dir = deblur::test::scratch_dir("rdn_weights");
    RdnModel m = init_model(21, RdnConfig{2, 2, 4});
    randomize_biases(m, 21);
    m.meta.trained_sigma = 1.75f;
    m.meta.run_id = "run-\xc3\xa9-42";
    save_weights(m, dir / "m.rdnw");
    const RdnModel back = load_weights(dir / "m.rdnw");
    CHECK(back.config == m.config);
    CHECK(back.meta.trained_sigma == 1.75f);
    CHECK(back.meta.run_id == m.meta.run_id);
    const auto la = conv_layers(std::as_const(m));
    const auto lb = conv_layers(back);
    REQUIRE(la.size() == lb.size());
    for (std::size_t i = 0; i < la.size(); ++i) {
        CHECK(la[i]->weight == lb[i]->weight);
        CHECK(la[i]->bias == lb[i]->bias);
    }
    const Image img = random_image(20, 20, 1, 1);
    CHECK(forward(m, img) == forward(back, img));

    // Header bytes.
    std::ifstream in(dir / "m.rdnw", std::ios::binary);
    char head[8];
    in.read(head, 8);
    CHECK(std::string(head, 4) == "RDNW");
    CHECK(head[4] == 1);
    CHECK(head[5] == 0);
}

TEST_CASE("weights loading rejects damaged files") {
    const auto dir = deblur::test::scratch_dir("rdn_bad");
    const RdnModel m = init_model(3, RdnConfig::tiny());
    save_weights(m, dir / "ok.rdnw");
    std::ifstream in(dir / "ok.rdnw", std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream(dir / name, std::ios::binary) << content;
        return dir / name;
    };
    std::string magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(load_weights(write("magic.rdnw", magic)), Error);
    CHECK_THROWS_AS(load_weights(write("trunc.rdnw", bytes.substr(0, bytes.size() - 3))), Error);
    CHECK_THROWS_AS(load_weights(write("short.rdnw", bytes.substr(0, 10))), Error);
    CHECK_THROWS_AS(load_weights(write("extra.rdnw", bytes + "x")), Error);
    std::string version = bytes;
    version[4] = 2;
    CHECK_THROWS_AS(load_weights(write("version.rdnw", version)), Error);
    std::string width = bytes;
    width[16] = 3;  // header says width 3, tensors say 2
    CHECK_THROWS_AS(load_weights(write("width.rdnw", width)), Error);
    CHECK_THROWS_AS(load_weights(dir / "missing.rdnw"), Error);
    try {
        load_weights(write("magic.rdnw", magic));
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Format);
    }
}
