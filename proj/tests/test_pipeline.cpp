#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "deblur/error.hpp"
#include "deblur/pipeline.hpp"
#include "deblur/synthetic.hpp"
#include "test_helpers.hpp"

using namespace deblur;
using deblur::test::random_image;
using deblur::test::scratch_dir;

namespace {

ModelRegistry grid_registry() {
    ModelRegistry reg;
    for (double s : default_sigma_grid()) reg.entries.push_back({s, "model_s" + std::to_string(s) + ".rdnw"});
    return reg;
}

std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("select_model picks the nearest sigma") {
    const ModelRegistry reg = grid_registry();
    CHECK(select_model(reg, 2.355).sigma == 1.0);
    CHECK(sigma_from_fwhm(5.3) == doctest::Approx(2.2507).epsilon(1e-4));
    CHECK(select_model(reg, 5.3).sigma == 2.5);
    CHECK(select_model(reg, fwhm_from_sigma(1.25)).sigma == 1.0);
    CHECK(select_model(reg, fwhm_from_sigma(4.75)).sigma == 4.5);
    CHECK(select_model(reg, 0.01).sigma == 0.5);
    CHECK(select_model(reg, 1000.0).sigma == 5.0);
    for (double s : default_sigma_grid()) {
        const RegistryEntry e = select_model(reg, fwhm_from_sigma(s));
        CHECK(e.sigma == s);
        CHECK(select_model(reg, fwhm_from_sigma(e.sigma)).sigma == e.sigma);
    }
    CHECK_THROWS_AS(select_model(ModelRegistry{}, 2.0), Error);
}

TEST_CASE("registry file round trip and validation") {
    const auto dir = scratch_dir("registry");
    ModelRegistry reg;
    for (double s : {1.0, 2.0}) {
        RdnModel m = init_model(1, RdnConfig::tiny());
        m.meta.trained_sigma = static_cast<float>(s);
        const std::string name = "m" + std::to_string(static_cast<int>(s)) + ".rdnw";
        save_weights(m, dir / name);
        reg.entries.push_back({s, name});
    }
    save_registry(reg, dir / "registry.csv");
    CHECK(read_text(dir / "registry.csv").rfind("sigma,weights_path\n1,m1.rdnw\n", 0) == 0);
    const ModelRegistry back = load_registry(dir / "registry.csv");
    REQUIRE(back.entries.size() == 2);
    CHECK(back.entries[1].sigma == 2.0);
    CHECK(back.entries[1].weights_path == dir / "m2.rdnw");
    CHECK_NOTHROW(validate(back, true));

    ModelRegistry swapped = back;
    std::swap(swapped.entries[0].weights_path, swapped.entries[1].weights_path);
    CHECK_THROWS_AS(validate(swapped, true), Error);
    ModelRegistry unordered = back;
    std::swap(unordered.entries[0], unordered.entries[1]);
    CHECK_THROWS_AS(validate(unordered), Error);
    ModelRegistry dup = back;
    dup.entries[1].sigma = 1.0;
    CHECK_THROWS_AS(validate(dup), Error);

    std::ofstream(dir / "bad.csv") << "sigma,weights_path\n1.0\n";
    CHECK_THROWS_AS(load_registry(dir / "bad.csv"), Error);
    std::ofstream(dir / "bad2.csv") << "sigma,weights_path\nabc,x.rdnw\n";
    CHECK_THROWS_AS(load_registry(dir / "bad2.csv"), Error);
    CHECK_THROWS_AS(load_registry(dir / "missing.csv"), Error);
}

TEST_CASE("center_crop and luma") {
    const Image img = random_image(10, 13, 3, 4);
    const Image c = center_crop(img, 6);
    CHECK(c.height == 6);
    CHECK(c.width == 6);
    CHECK(c.at(0, 0, 1) == img.at(2, 3, 1));
    CHECK(c.at(5, 5, 2) == img.at(7, 8, 2));
    CHECK_THROWS_AS(center_crop(img, 11), Error);

    const Image l = to_luma(img);
    CHECK(l.channels == 1);
    CHECK(l.at(4, 4) == doctest::Approx(0.299 * img.at(4, 4, 0) + 0.587 * img.at(4, 4, 1) + 0.114 * img.at(4, 4, 2)));
    const Image gray = random_image(5, 5, 1, 1);
    CHECK(to_luma(gray) == gray);
}

TEST_CASE("prep bookkeeping") {
    const auto root = scratch_dir("prep");
    SUBCASE("one exact-size image") {
        std::filesystem::create_directories(root / "in");
        save_image(synthetic::random_scene(256, 256, 1), root / "in" / "a.png", ImageFormat::Png16);
        PrepOptions opt;
        opt.crop = 256;
        opt.sigmas = {1.0, 2.0};
        const PrepManifest m = prep(root / "in", root / "out", opt);
        CHECK(m.ground_truth_tiles == 1);
        CHECK(m.records.size() == 2);
        CHECK(load_training_pairs(m, 1.0).size() == 1);
        CHECK(load_training_pairs(m, 2.0).size() == 1);
    }
    SUBCASE("two images, three sigmas") {
        std::filesystem::create_directories(root / "in");
        save_image(synthetic::random_scene(600, 530, 2), root / "in" / "a.png", ImageFormat::Png16);
        save_image(merge_channels(std::vector<Image>{synthetic::random_scene(520, 512, 3),
                                                     synthetic::random_scene(520, 512, 4),
                                                     synthetic::random_scene(520, 512, 5)}),
                   root / "in" / "b.png", ImageFormat::Png8);
        std::ofstream(root / "in" / "notes.txt") << "ignored";
        PrepOptions opt;
        opt.crop = 512;
        opt.tile = 256;
        opt.sigmas = {0.5, 1.0, 2.5};
        const PrepManifest m = prep(root / "in", root / "out", opt);
        CHECK(m.sources.size() == 2);
        CHECK(m.ground_truth_tiles == 8);
        CHECK(m.records.size() == 24);

        std::set<std::filesystem::path> gt;
        for (const PrepRecord& r : m.records) {
            gt.insert(r.ground_truth);
            CHECK(std::filesystem::exists(root / "out" / r.blurred));
        }
        CHECK(gt.size() == 8);

        const PrepManifest back = read_manifest(root / "out" / "manifest.csv");
        CHECK(back.records.size() == 24);
        CHECK(back.ground_truth_tiles == 8);
        CHECK(back.crop == 512);
        CHECK(back.sigmas == m.sigmas);
        CHECK(back.output_dir == root / "out");

        const std::vector<TrainingPair> pairs = load_training_pairs(back, 2.5);
        REQUIRE(pairs.size() == 8);
        CHECK(load_training_pairs(back, 2.5, 3).size() == 3);
        CHECK_THROWS_AS(load_training_pairs(back, 3.0), Error);

        // Each blurred tile is the ground-truth tile blurred on its own.
        const Image gt0 = pairs[0].target;
        CHECK(gt0.height == 256);
        CHECK(mse(pairs[0].input, blur(gt0, 2.5)) < 1e-9);

        const Image src = load_image(root / "in" / "a.png");
        const Image crop = center_crop(src, 512);
        CHECK(mse(load_image(root / "out" / "gt" / "a_r1_c0.png"), tile(crop, 256).tile_at(1, 0)) < 1e-9);
    }
    SUBCASE("errors") {
        std::filesystem::create_directories(root / "in");
        save_image(synthetic::random_scene(100, 100, 1), root / "in" / "small.png", ImageFormat::Png16);
        PrepOptions opt;
        opt.crop = 128;
        CHECK_THROWS_AS(prep(root / "in", root / "out", opt), Error);
        CHECK_THROWS_AS(prep(root / "missing", root / "out", opt), Error);
        opt.crop = 64;
        opt.sigmas = {};
        CHECK_THROWS_AS(prep(root / "in", root / "out", opt), Error);
    }
}

TEST_CASE("deblur on a single tile equals forward") {
    const RdnModel m = init_model(4, RdnConfig{1, 2, 4});
    const Image img = random_image(256, 256, 1, 4);
    CHECK(deblur::deblur(img, m) == forward(m, img));
}

TEST_CASE("deblur preserves shape across tiles, channels and slices") {
    const RdnModel m = init_model(5, RdnConfig{1, 2, 4});
    DeblurOptions opt;
    opt.tile_size = 32;
    for (auto [h, w, c] : {std::tuple{70, 45, 1}, std::tuple{32, 32, 3}, std::tuple{5, 80, 3}}) {
        const Image out = deblur::deblur(random_image(h, w, c, h), m, opt);
        CHECK(out.height == h);
        CHECK(out.width == w);
        CHECK(out.channels == c);
    }
    const Image rgb = random_image(40, 40, 3, 9);
    const Image out = deblur::deblur(rgb, m, opt);
    CHECK(extract_channel(out, 1) == deblur::deblur(extract_channel(rgb, 1), m, opt));

    opt.overlap = 8;
    const Image feathered = deblur::deblur(random_image(70, 45, 1, 3), m, opt);
    CHECK(feathered.height == 70);

    VolumeStack vol;
    for (int k = 0; k < 3; ++k) vol.slices.push_back(random_image(40, 50, 1, 100 + k));
    const VolumeStack dv = deblur::deblur(vol, m, DeblurOptions{32, 0});
    REQUIRE(dv.depth() == 3);
    for (int k = 0; k < 3; ++k) CHECK(dv.slices[k] == deblur::deblur(vol.slices[k], m, DeblurOptions{32, 0}));

    const auto dir = scratch_dir("volume");
    for (int k = 0; k < 3; ++k) save_image(vol.slices[k], dir / ("slice_" + std::to_string(k) + ".raw"), ImageFormat::RawF32);
    const VolumeStack loaded = load_volume(dir);
    REQUIRE(loaded.depth() == 3);
    for (int k = 0; k < 3; ++k) CHECK(loaded.slices[k] == vol.slices[k]);
}

TEST_CASE("identity-trained model reproduces its input") {
    std::vector<TrainingPair> data;
    for (int i = 0; i < 40; ++i) {
        const Image img = synthetic::random_scene(32, 32, i);
        data.push_back({img, img});
    }
    TrainConfig cfg;
    cfg.epochs = 300;
    cfg.lr_initial = 1e-3;
    cfg.lr_decay = 1.0;
    cfg.batch_size = 2;
    cfg.seed = 2;
    const TrainResult r = train(init_model(2, RdnConfig{1, 2, 4}), data, cfg);
    const Image test = synthetic::random_scene(96, 80, 999);
    DeblurOptions opt;
    opt.tile_size = 32;
    CHECK(psnr(test, deblur::deblur(test, r.model, opt)) > 40.0);
}

TEST_CASE("benchmark rows and constant input") {
    const RdnModel m = make_zero_model(RdnConfig::tiny());
    const BenchmarkResult flat = benchmark(Image(32, 32, 1, 0.6f), 2.0, m, DeconvConfig{});
    REQUIRE(flat.report.entries.size() == 4);
    CHECK(flat.report.entries[0].method == "blurred");
    CHECK(flat.report.entries[1].method == "Deconv");
    CHECK(flat.report.entries[2].method == "RL");
    CHECK(flat.report.entries[3].method == "proposed");
    CHECK(flat.report.find("blurred")->mse < 1e-12);
    CHECK(flat.report.find("Deconv")->mse < 1e-12);
    CHECK(flat.report.find("RL")->mse < 1e-12);
    // A zero network maps everything to 0.
    CHECK(flat.report.find("proposed")->mse == doctest::Approx(0.36).epsilon(1e-6));
    for (float v : flat.blind.data) CHECK(v == doctest::Approx(0.6f).epsilon(1e-5));

    const Image truth = synthetic::checkerboard(48, 48, 6);
    const BenchmarkResult r = benchmark(truth, 1.5, init_model(1, RdnConfig::tiny()), DeconvConfig{});
    for (const MetricsEntry& e : r.report.entries) {
        if (e.mse > 0) CHECK(std::abs(e.psnr - 10 * std::log10(1 / e.mse)) < 0.05);
    }
    CHECK(r.report.find("RL")->psnr > r.report.find("blurred")->psnr);
    CHECK(r.blind_psf.radius == default_radius(1.5));

    const auto dir = scratch_dir("benchmark");
    write_benchmark_artifacts(r, dir, 10);
    for (const char* f : {"report.csv", "original.png", "blurred.png", "deconv.png", "rl.png", "proposed.png",
                          "deconv_psf.csv", "line_profile.csv"}) {
        CHECK(std::filesystem::exists(dir / f));
    }
    const MetricsReport back = parse_report_csv(read_text(dir / "report.csv"));
    CHECK(back.entries.size() == 4);
    std::istringstream prof(read_text(dir / "line_profile.csv"));
    std::string line;
    int lines = 0;
    std::getline(prof, line);
    CHECK(line == "x,original,blurred,deconv,rl,proposed");
    while (std::getline(prof, line)) ++lines;
    CHECK(lines == 48);
    CHECK_THROWS_AS(write_benchmark_artifacts(r, dir, 48), Error);
}

TEST_CASE("benchmark through a registry") {
    const auto dir = scratch_dir("bench_registry");
    ModelRegistry reg;
    for (double s : {1.0, 3.0}) {
        RdnModel m = init_model(static_cast<std::uint64_t>(s), RdnConfig::tiny());
        m.meta.trained_sigma = static_cast<float>(s);
        save_weights(m, dir / ("m" + std::to_string(int(s)) + ".rdnw"));
        reg.entries.push_back({s, dir / ("m" + std::to_string(int(s)) + ".rdnw")});
    }
    const BenchmarkResult r = benchmark(synthetic::bar_target(32, 32, 4), 2.6, reg, DeconvConfig{});
    CHECK(r.model_sigma == 3.0);
    CHECK(r.sigma == 2.6);
}

TEST_CASE("resolution report") {
    const Image edge = synthetic::blade_edge(16, 96, 48);
    const Image b1 = blur(edge, 1.0);
    const Image b2 = blur(edge, 2.0);

    const ResolutionReport same = resolution_report(b2, b2, 8, 1.0);
    REQUIRE(same.improvement.has_value());
    CHECK(*same.improvement == doctest::Approx(1.0));

    const ResolutionReport r = resolution_report(b2, b1, 8, 0.5);
    REQUIRE(r.improvement.has_value());
    CHECK(std::abs(*r.improvement - 2.0) < 0.1);
    CHECK(r.before.fwhm == doctest::Approx(0.5 * fwhm_from_sigma(2.0)).epsilon(0.05));

    const std::string text = format_resolution(r);
    CHECK(text.rfind("FWHM 2.", 0) == 0);
    CHECK(text.find(" um, resolution improved 2.") != std::string::npos);
    CHECK(text.back() == 'x');

    const ResolutionReport flat = resolution_report(Image(16, 96, 1, 0.5f), b1, 8, 1.0);
    CHECK_FALSE(flat.before.ok());
    CHECK(flat.after.ok());
    CHECK_FALSE(flat.improvement.has_value());
    CHECK(format_resolution(flat).find("n/a") != std::string::npos);
    CHECK_THROWS_AS(resolution_report(b1, Image(16, 95, 1), 8, 1.0), Error);
}
