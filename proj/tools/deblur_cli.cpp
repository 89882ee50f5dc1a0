#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deblur/deconv.hpp"
#include "deblur/error.hpp"
#include "deblur/image_io.hpp"
#include "deblur/metrics.hpp"
#include "deblur/pipeline.hpp"
#include "deblur/psf.hpp"
#include "deblur/synthetic.hpp"
#include "deblur/train.hpp"

namespace fs = std::filesystem;
using namespace deblur;

namespace {

bool g_quiet = false;

void info(const std::string& line) {
    if (!g_quiet) std::cerr << line << '\n';
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += (c == '\n' || c == '\r') ? ' ' : c;
    }
    return out;
}

int report_error(std::string_view kind, const std::string& message, int code) {
    std::cerr << "error kind=" << kind << " message=\"" << escape(message) << "\"\n";
    return code;
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return 3;
        case ErrorKind::DimensionMismatch: return 4;
        case ErrorKind::Io: return 5;
        case ErrorKind::Format: return 6;
        case ErrorKind::Numeric: return 7;
        case ErrorKind::Training: return 8;
    }
    return 1;
}

std::string fmt(double v, int precision = 6) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        require(used == item.size() && !item.empty(), ErrorKind::InvalidArgument, "not a number list: " + text);
        out.push_back(v);
    }
    return out;
}

ImageFormat output_format(const fs::path& path, const std::string& requested) {
    if (requested.empty()) return format_for_path(path);
    const auto f = parse_image_format(requested);
    require(f.has_value(), ErrorKind::InvalidArgument, "unknown image format '" + requested + "'");
    return *f;
}

template <typename Fn>
Image per_channel(const Image& img, Fn&& fn) {
    std::vector<Image> planes = split_channels(img);
    for (Image& p : planes) p = fn(p);
    return merge_channels(planes);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Reads `key = value` lines; '#' starts a comment. Keys are flag names
// without the leading dashes.
std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open config " + path.string());
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    int number = 0;
    const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++number;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, ErrorKind::Format,
                path.string() + ":" + std::to_string(number) + ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        while (!key.empty() && key.front() == '-') key.erase(0, 1);
        out.emplace_back(key, trim(line.substr(eq + 1)));
    }
    return out;
}

// Expands `--config FILE` into ordinary flags placed right after the
// subcommand, skipping keys that are already on the command line.
std::vector<std::string> expand_config(std::vector<std::string> args) {
    std::optional<fs::path> config;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (!config) return args;

    std::size_t sub = 1;
    while (sub < args.size() && args[sub].rfind("-", 0) == 0) ++sub;
    require(sub < args.size(), ErrorKind::InvalidArgument, "--config needs a subcommand");

    const auto given = [&](const std::string& key) {
        for (std::size_t i = sub + 1; i < args.size(); ++i) {
            if (args[i] == "--" + key || args[i].rfind("--" + key + "=", 0) == 0) return true;
        }
        return false;
    };
    std::vector<std::string> extra;
    for (const auto& [key, value] : read_config(*config)) {
        if (given(key)) continue;
        if (value == "true" || value == "on" || value == "yes") {
            extra.push_back("--" + key);
        } else if (value == "false" || value == "off" || value == "no") {
            continue;
        } else {
            extra.push_back("--" + key);
            extra.push_back(value);
        }
    }
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub) + 1, extra.begin(), extra.end());
    return args;
}

// ---- subcommands --------------------------------------------------------------

struct PrepArgs {
    fs::path in, out;
    int crop = 2304;
    int tile = 256;
    std::string sigmas = "1";
    std::string format = "png16";
};

int run_prep(const PrepArgs& a) {
    PrepOptions opt;
    opt.crop = a.crop;
    opt.tile = a.tile;
    opt.sigmas = parse_list(a.sigmas);
    opt.tile_format = output_format({}, a.format);
    const auto t0 = std::chrono::steady_clock::now();
    const PrepManifest m = prep(a.in, a.out, opt);
    info("prep: " + std::to_string(m.sources.size()) + " images, " + std::to_string(m.ground_truth_tiles) +
         " ground-truth tiles, " + std::to_string(m.records.size()) + " pairs in " + fmt(seconds_since(t0), 3) + " s");
    std::cout << m.ground_truth_tiles << '\n';
    return 0;
}

struct TrainArgs {
    fs::path manifest, out, curve, registry;
    double sigma = 1.0;
    int epochs = 100;
    std::uint64_t seed = 0;
    int limit = -1;
    int synthetic = 0;
    int synthetic_size = 64;
    int blocks = 4, convs = 5, width = 32;
    double lr = 1e-4, decay = 0.95, val_fraction = 0.1;
    int batch = 8;
    std::string run_id;
};

int run_train(const TrainArgs& a) {
    std::vector<TrainingPair> data;
    if (a.synthetic > 0) {
        data = synthetic::make_pairs(a.synthetic, a.synthetic_size, a.sigma, a.seed);
    } else {
        require(!a.manifest.empty(), ErrorKind::InvalidArgument, "train needs --manifest or --synthetic");
        data = load_training_pairs(read_manifest(a.manifest), a.sigma, a.limit);
    }
    TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.seed = a.seed;
    cfg.lr_initial = a.lr;
    cfg.lr_decay = a.decay;
    cfg.batch_size = a.batch;
    cfg.validation_fraction = a.val_fraction;
    validate(cfg);

    RdnModel model = init_model(a.seed, RdnConfig{a.blocks, a.convs, a.width});
    model.meta.trained_sigma = static_cast<float>(a.sigma);
    model.meta.run_id = a.run_id.empty() ? "d" + std::to_string(a.blocks) + "c" + std::to_string(a.convs) + "w" +
                                               std::to_string(a.width) + "-sigma" + fmt(a.sigma) + "-seed" +
                                               std::to_string(a.seed) + "-e" + std::to_string(a.epochs)
                                         : a.run_id;
    info("train: " + std::to_string(data.size()) + " pairs, " + std::to_string(parameter_count(model)) +
         " parameters, run " + model.meta.run_id);

    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult r = train(model, data, cfg, [](const EpochReport& e) {
        info("epoch " + std::to_string(e.epoch) + " train " + fmt(e.train_loss) + " val " + fmt(e.val_loss) +
             (e.epoch > 0 ? " lr " + fmt(e.lr) : ""));
    });
    save_weights(r.model, a.out);
    const fs::path curve = a.curve.empty() ? fs::path(a.out).replace_extension(".loss.csv") : a.curve;
    write_loss_curve_csv(r.curve, curve);
    info("train: best epoch " + std::to_string(r.best_epoch) + " val " + fmt(r.curve.val_loss[r.best_epoch]) + " in " +
         fmt(seconds_since(t0), 3) + " s; weights " + a.out.string() + ", curve " + curve.string());
    if (!checkpoint_rule_holds(r.curve)) {
        info("train: warning: validation loss rose more than 10% above its minimum");
    }

    if (!a.registry.empty()) {
        ModelRegistry reg;
        if (fs::exists(a.registry)) reg = load_registry(a.registry);
        const fs::path base = fs::absolute(a.registry).parent_path();
        const fs::path weights = fs::absolute(a.out).lexically_relative(base);
        std::erase_if(reg.entries, [&](const RegistryEntry& e) { return e.sigma == a.sigma; });
        reg.entries.push_back({a.sigma, weights.empty() ? fs::absolute(a.out) : weights});
        std::sort(reg.entries.begin(), reg.entries.end(),
                  [](const RegistryEntry& x, const RegistryEntry& y) { return x.sigma < y.sigma; });
        for (RegistryEntry& e : reg.entries) {
            if (e.weights_path.is_absolute() && e.weights_path.parent_path() != fs::path{}) {
                const fs::path rel = e.weights_path.lexically_relative(base);
                if (!rel.empty()) e.weights_path = rel;
            }
        }
        save_registry(reg, a.registry);
        info("train: registered sigma " + fmt(a.sigma) + " in " + a.registry.string());
    }
    return 0;
}

struct DeblurArgs {
    fs::path in, out, registry, model;
    std::optional<double> sigma, fwhm;
    int tile = 256;
    int overlap = 0;
    std::string format;
};

RdnModel resolve_model(const DeblurArgs& a) {
    if (!a.model.empty()) return load_weights(a.model);
    require(!a.registry.empty(), ErrorKind::InvalidArgument, "deblur needs --model or --registry");
    const ModelRegistry reg = load_registry(a.registry);
    require(a.sigma.has_value() != a.fwhm.has_value(), ErrorKind::InvalidArgument,
            "give exactly one of --sigma and --fwhm with --registry");
    const double fwhm = a.fwhm ? *a.fwhm : fwhm_from_sigma(*a.sigma);
    const RegistryEntry e = select_model(reg, fwhm);
    info("deblur: sigma " + fmt(sigma_from_fwhm(fwhm)) + " -> model sigma " + fmt(e.sigma) + " (" +
         e.weights_path.string() + ")");
    return load_weights(e.weights_path);
}

int run_deblur(const DeblurArgs& a) {
    const RdnModel model = resolve_model(a);
    const DeblurOptions opt{a.tile, a.overlap};
    if (fs::is_directory(a.in)) {
        const VolumeStack vol = load_volume(a.in);
        std::vector<fs::path> names;
        for (const auto& entry : fs::directory_iterator(a.in)) {
            const std::string ext = entry.path().extension().string();
            if (entry.is_regular_file() && (ext == ".png" || ext == ".raw" || ext == ".f32")) {
                names.push_back(entry.path().filename());
            }
        }
        std::sort(names.begin(), names.end());
        fs::create_directories(a.out);
        const auto t0 = std::chrono::steady_clock::now();
        const VolumeStack out = deblur::deblur(vol, model, opt);
        const double secs = seconds_since(t0);
        for (std::size_t k = 0; k < names.size(); ++k) {
            save_image(out.slices[k], a.out / names[k], output_format(a.out / names[k], a.format));
        }
        info("deblur: " + std::to_string(vol.depth()) + " slices in " + fmt(secs, 3) + " s (" +
             fmt(secs / vol.depth(), 3) + " s per slice)");
        return 0;
    }
    const Image img = load_image(a.in);
    const auto t0 = std::chrono::steady_clock::now();
    const Image out = deblur::deblur(img, model, opt);
    info("deblur: " + std::to_string(img.height) + "x" + std::to_string(img.width) + "x" +
         std::to_string(img.channels) + " in " + fmt(seconds_since(t0), 3) + " s");
    save_image(out, a.out, output_format(a.out, a.format));
    return 0;
}

struct BlurArgs {
    fs::path in, out;
    double sigma = 1.0;
    double noise = 0.0;
    std::uint64_t seed = 0;
    std::string format;
};

int run_blur(const BlurArgs& a) {
    const Image img = load_image(a.in);
    save_image(blur(img, a.sigma, BlurOptions{a.noise, a.seed}), a.out, output_format(a.out, a.format));
    return 0;
}

struct DeconvArgs {
    fs::path in, out, psf_out;
    std::string method = "rl";
    int iters = 20;
    double sigma = 1.0;
    std::string format;
};

int run_deconv(const DeconvArgs& a) {
    const Image img = load_image(a.in);
    DeconvConfig cfg;
    cfg.iterations = a.iters;
    validate(cfg);
    const PsfKernel psf = make_gaussian_kernel(a.sigma, default_radius(a.sigma));
    Image out;
    if (a.method == "rl") {
        out = per_channel(img, [&](const Image& p) { return richardson_lucy(p, psf, cfg); });
    } else if (a.method == "blind") {
        std::optional<PsfKernel> first_psf;
        out = per_channel(img, [&](const Image& p) {
            BlindResult r = blind_deconv(p, psf, cfg);
            if (!first_psf) first_psf = r.psf;
            return r.image;
        });
        info("deconv: refined PSF second moment " + fmt(second_moment(*first_psf)) + " (initial " +
             fmt(second_moment(psf)) + ")");
        if (!a.psf_out.empty()) {
            std::ofstream csv(a.psf_out);
            require(static_cast<bool>(csv), ErrorKind::Io, "cannot write " + a.psf_out.string());
            csv.precision(9);
            for (int dy = -first_psf->radius; dy <= first_psf->radius; ++dy) {
                for (int dx = -first_psf->radius; dx <= first_psf->radius; ++dx) {
                    csv << (dx > -first_psf->radius ? "," : "") << first_psf->at(dy, dx);
                }
                csv << '\n';
            }
        }
    } else {
        fail(ErrorKind::InvalidArgument, "unknown deconvolution method '" + a.method + "' (rl or blind)");
    }
    save_image(out, a.out, output_format(a.out, a.format));
    return 0;
}

struct MetricsArgs {
    fs::path ref, out;
    std::string cand;
};

int run_metrics(const MetricsArgs& a) {
    const Image ref = load_image(a.ref);
    std::vector<std::pair<std::string, Image>> candidates;
    std::istringstream in(a.cand);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        candidates.emplace_back(fs::path(item).stem().string(), load_image(item));
    }
    const MetricsReport report = build_report(ref, candidates);
    if (a.out.empty()) {
        std::cout << to_csv(report);
    } else {
        write_report_csv(report, a.out);
    }
    return 0;
}

struct BenchmarkArgs {
    fs::path in, registry, model, out;
    double sigma = 1.0;
    int iters = 20;
    int row = -1;
    int tile = 256;
};

int run_benchmark(const BenchmarkArgs& a) {
    const Image original = load_image(a.in);
    DeconvConfig cfg;
    cfg.iterations = a.iters;
    const DeblurOptions opt{a.tile, 0};
    BenchmarkResult r;
    if (!a.model.empty()) {
        r = benchmark(original, a.sigma, load_weights(a.model), cfg, opt);
    } else {
        require(!a.registry.empty(), ErrorKind::InvalidArgument, "benchmark needs --registry or --model");
        r = benchmark(original, a.sigma, load_registry(a.registry), cfg, opt);
    }
    const int row = a.row >= 0 ? a.row : original.height / 2;
    write_benchmark_artifacts(r, a.out, row);
    std::cout << to_csv(r.report);
    return 0;
}

struct ResolutionArgs {
    fs::path before, after, out;
    int line = -1;
    double pitch = 1.0;
    int x_begin = 0;
    int x_end = -1;
};

int run_resolution(const ResolutionArgs& a) {
    const auto is_csv = [](const fs::path& p) { return p.extension() == ".csv"; };
    ResolutionReport r;
    if (is_csv(a.before) && is_csv(a.after)) {
        r = resolution_report(read_edge_profile_csv(a.before), read_edge_profile_csv(a.after));
    } else {
        const Image before = load_image(a.before);
        const Image after = load_image(a.after);
        const int row = a.line >= 0 ? a.line : before.height / 2;
        r = resolution_report(before, after, row, a.pitch, a.x_begin, a.x_end);
    }
    if (!a.out.empty()) write_edge_fit_csv(a.out, {{"before", r.before}, {"after", r.after}});
    std::cout << format_resolution(r) << '\n';
    return r.improvement ? 0 : exit_code(ErrorKind::Numeric);
}

struct OpticsArgs {
    double wavelength = 0.0;
    double na = 0.0;
    double pitch = 1.0;
    fs::path registry;
};

int run_optics(const OpticsArgs& a) {
    const double fwhm_um = fwhm_from_optics({a.wavelength, a.na, a.pitch});
    const double fwhm_px = fwhm_um / a.pitch;
    std::cout << "fwhm_um=" << fmt(fwhm_um, 8) << " fwhm_px=" << fmt(fwhm_px, 8)
              << " sigma_px=" << fmt(sigma_from_fwhm(fwhm_px), 8);
    if (!a.registry.empty()) {
        const RegistryEntry e = select_model(load_registry(a.registry), fwhm_px);
        std::cout << " model_sigma=" << fmt(e.sigma) << " model=" << e.weights_path.string();
    }
    std::cout << '\n';
    return 0;
}

struct SynthArgs {
    fs::path out;
    std::string pattern = "scene";
    int size = 256;
    int period = 8;
    std::uint64_t seed = 0;
    std::string format;
};

int run_synth(const SynthArgs& a) {
    Image img;
    if (a.pattern == "checker") {
        img = synthetic::checkerboard(a.size, a.size, a.period);
    } else if (a.pattern == "bars") {
        img = synthetic::bar_target(a.size, a.size, a.period);
    } else if (a.pattern == "edge") {
        img = synthetic::blade_edge(a.size, a.size, a.size / 2);
    } else {
        img = synthetic::random_scene(a.size, a.size, a.seed);
    }
    save_image(img, a.out, output_format(a.out, a.format));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Microscopy image deblurring: blur simulation, classical deconvolution, RDN training and inference"};
    app.require_subcommand(1);
    app.add_flag("-q,--quiet", g_quiet, "Suppress progress logging");
    app.footer("Any subcommand accepts --config FILE with key=value lines; command-line flags take precedence.");

    PrepArgs prep_args;
    auto* prep_cmd = app.add_subcommand("prep", "Crop, tile and blur a directory of images into training pairs");
    prep_cmd->add_option("--in", prep_args.in, "Directory of source images")->required();
    prep_cmd->add_option("--out", prep_args.out, "Output directory")->required();
    prep_cmd->add_option("--crop", prep_args.crop, "Center crop size")->capture_default_str();
    prep_cmd->add_option("--tile", prep_args.tile, "Tile size")->capture_default_str();
    prep_cmd->add_option("--sigmas", prep_args.sigmas, "Comma-separated blur sigmas in pixels")->capture_default_str();
    prep_cmd->add_option("--format", prep_args.format, "Tile format: png8, png16 or rawf32")->capture_default_str();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train an RDN for one blur sigma");
    train_cmd->add_option("--manifest", train_args.manifest, "manifest.csv written by prep");
    train_cmd->add_option("--synthetic", train_args.synthetic, "Train on N generated pairs instead of a manifest");
    train_cmd->add_option("--synthetic-size", train_args.synthetic_size, "Side of generated pairs")->capture_default_str();
    train_cmd->add_option("--sigma", train_args.sigma, "Blur sigma in pixels")->required();
    train_cmd->add_option("--epochs", train_args.epochs)->capture_default_str();
    train_cmd->add_option("--seed", train_args.seed)->capture_default_str();
    train_cmd->add_option("--out", train_args.out, "Weights file")->required();
    train_cmd->add_option("--curve", train_args.curve, "Loss curve CSV (default: next to the weights)");
    train_cmd->add_option("--register", train_args.registry, "Add the model to this registry file");
    train_cmd->add_option("--limit", train_args.limit, "Use at most this many pairs");
    train_cmd->add_option("--blocks", train_args.blocks, "Residual dense blocks (D)")->capture_default_str();
    train_cmd->add_option("--convs", train_args.convs, "Convolutions per block (C)")->capture_default_str();
    train_cmd->add_option("--width", train_args.width, "Feature channels")->capture_default_str();
    train_cmd->add_option("--lr", train_args.lr, "Initial learning rate")->capture_default_str();
    train_cmd->add_option("--decay", train_args.decay, "Learning rate decay per epoch")->capture_default_str();
    train_cmd->add_option("--batch", train_args.batch, "Mini-batch size")->capture_default_str();
    train_cmd->add_option("--val-fraction", train_args.val_fraction)->capture_default_str();
    train_cmd->add_option("--run-id", train_args.run_id, "Identifier stored in the weights file");

    DeblurArgs deblur_args;
    auto* deblur_cmd = app.add_subcommand("deblur", "Deblur an image or a directory of slices with a trained RDN");
    deblur_cmd->add_option("--in", deblur_args.in, "Image file or directory of slices")->required();
    deblur_cmd->add_option("--out", deblur_args.out, "Output image or directory")->required();
    auto* sigma_opt = deblur_cmd->add_option("--sigma", deblur_args.sigma, "Blur sigma in pixels");
    auto* fwhm_opt = deblur_cmd->add_option("--fwhm", deblur_args.fwhm, "System FWHM in pixels");
    sigma_opt->excludes(fwhm_opt);
    deblur_cmd->add_option("--registry", deblur_args.registry, "Model registry CSV");
    deblur_cmd->add_option("--model", deblur_args.model, "Weights file (bypasses the registry)");
    deblur_cmd->add_option("--tile", deblur_args.tile)->capture_default_str();
    deblur_cmd->add_option("--overlap", deblur_args.overlap, "Tile overlap with feathered stitching")
        ->capture_default_str();
    deblur_cmd->add_option("--format", deblur_args.format, "Output format (default: from extension)");

    BlurArgs blur_args;
    auto* blur_cmd = app.add_subcommand("blur", "Apply a Gaussian PSF");
    blur_cmd->add_option("--in", blur_args.in)->required();
    blur_cmd->add_option("--out", blur_args.out)->required();
    blur_cmd->add_option("--sigma", blur_args.sigma)->required();
    blur_cmd->add_option("--noise", blur_args.noise, "Additive Gaussian noise stddev")->capture_default_str();
    blur_cmd->add_option("--seed", blur_args.seed, "Noise seed")->capture_default_str();
    blur_cmd->add_option("--format", blur_args.format);

    DeconvArgs deconv_args;
    auto* deconv_cmd = app.add_subcommand("deconv", "Richardson-Lucy or blind deconvolution");
    deconv_cmd->add_option("--in", deconv_args.in)->required();
    deconv_cmd->add_option("--out", deconv_args.out)->required();
    deconv_cmd->add_option("--method", deconv_args.method)->check(CLI::IsMember({"rl", "blind"}))->capture_default_str();
    deconv_cmd->add_option("--iters", deconv_args.iters)->capture_default_str();
    deconv_cmd->add_option("--sigma", deconv_args.sigma, "PSF sigma (initial guess for blind)")->required();
    deconv_cmd->add_option("--psf-out", deconv_args.psf_out, "Write the refined PSF as CSV (blind)");
    deconv_cmd->add_option("--format", deconv_args.format);

    MetricsArgs metrics_args;
    auto* metrics_cmd = app.add_subcommand("metrics", "MSE, PSNR and SSIM against a reference");
    metrics_cmd->add_option("--ref", metrics_args.ref)->required();
    metrics_cmd->add_option("--cand", metrics_args.cand, "Comma-separated candidate images")->required();
    metrics_cmd->add_option("--out", metrics_args.out, "Report CSV (default: stdout)");

    BenchmarkArgs bench_args;
    auto* bench_cmd = app.add_subcommand("benchmark", "Compare blind deconvolution, RL and the RDN on one image");
    bench_cmd->add_option("--in", bench_args.in, "Sharp original")->required();
    bench_cmd->add_option("--sigma", bench_args.sigma)->required();
    bench_cmd->add_option("--registry", bench_args.registry);
    bench_cmd->add_option("--model", bench_args.model);
    bench_cmd->add_option("--out", bench_args.out, "Artifact directory")->required();
    bench_cmd->add_option("--iters", bench_args.iters)->capture_default_str();
    bench_cmd->add_option("--row", bench_args.row, "Line profile row (default: middle)");
    bench_cmd->add_option("--tile", bench_args.tile)->capture_default_str();

    ResolutionArgs res_args;
    auto* res_cmd = app.add_subcommand("resolution", "Edge-based FWHM before and after deblurring");
    res_cmd->add_option("--before", res_args.before, "Image or edge profile CSV")->required();
    res_cmd->add_option("--after", res_args.after, "Image or edge profile CSV")->required();
    res_cmd->add_option("--line", res_args.line, "Scan row (default: middle)");
    res_cmd->add_option("--pitch", res_args.pitch, "Pixel pitch in um")->capture_default_str();
    res_cmd->add_option("--x-begin", res_args.x_begin)->capture_default_str();
    res_cmd->add_option("--x-end", res_args.x_end);
    res_cmd->add_option("--out", res_args.out, "Write both fits as CSV");

    OpticsArgs optics_args;
    auto* optics_cmd = app.add_subcommand("optics", "Diffraction-limited FWHM and the matching model");
    optics_cmd->add_option("--wavelength", optics_args.wavelength, "nm")->required();
    optics_cmd->add_option("--na", optics_args.na, "Numerical aperture")->required();
    optics_cmd->add_option("--pitch", optics_args.pitch, "Pixel pitch in um")->capture_default_str();
    optics_cmd->add_option("--registry", optics_args.registry);

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic test target");
    synth_cmd->add_option("--out", synth_args.out)->required();
    synth_cmd->add_option("--pattern", synth_args.pattern)
        ->check(CLI::IsMember({"scene", "checker", "bars", "edge"}))
        ->capture_default_str();
    synth_cmd->add_option("--size", synth_args.size)->capture_default_str();
    synth_cmd->add_option("--period", synth_args.period, "Checker period or widest bar")->capture_default_str();
    synth_cmd->add_option("--seed", synth_args.seed)->capture_default_str();
    synth_cmd->add_option("--format", synth_args.format);

    std::vector<std::string> args(argv, argv + argc);
    try {
        args = expand_config(std::move(args));
        std::vector<const char*> raw;
        for (const auto& s : args) raw.push_back(s.c_str());
        app.parse(static_cast<int>(raw.size()), raw.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("usage", e.what(), 2);
    } catch (const Error& e) {
        return report_error(to_string(e.kind()), e.what(), exit_code(e.kind()));
    }

    try {
        if (*prep_cmd) return run_prep(prep_args);
        if (*train_cmd) return run_train(train_args);
        if (*deblur_cmd) return run_deblur(deblur_args);
        if (*blur_cmd) return run_blur(blur_args);
        if (*deconv_cmd) return run_deconv(deconv_args);
        if (*metrics_cmd) return run_metrics(metrics_args);
        if (*bench_cmd) return run_benchmark(bench_args);
        if (*res_cmd) return run_resolution(res_args);
        if (*optics_cmd) return run_optics(optics_args);
        if (*synth_cmd) return run_synth(synth_args);
    } catch (const Error& e) {
        return report_error(to_string(e.kind()), e.what(), exit_code(e.kind()));
    } catch (const std::exception& e) {
        return report_error("internal", e.what(), 1);
    }
    return 0;
}
