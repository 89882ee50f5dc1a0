#include "deblur/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "deblur/error.hpp"
#include "deblur/parallel.hpp"

namespace fs = std::filesystem;

namespace deblur {

namespace {

std::string format_sigma(double sigma) {
    std::ostringstream os;
    os << std::setprecision(10) << sigma;
    return os.str();
}

std::vector<fs::path> list_images(const fs::path& dir) {
    require(fs::is_directory(dir), ErrorKind::Io, "not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".raw" || ext == ".f32") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

template <typename Fn>
Image per_channel(const Image& img, Fn&& fn) {
    std::vector<Image> planes = split_channels(img);
    for (Image& p : planes) p = fn(p);
    return merge_channels(planes);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        fail(ErrorKind::Format, "invalid number for " + what + ": '" + s + "'");
    }
    require(used == s.size(), ErrorKind::Format, "invalid number for " + what + ": '" + s + "'");
    return v;
}

}  // namespace

// ---- registry ---------------------------------------------------------------

std::vector<double> default_sigma_grid() { return {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0}; }

void validate(const ModelRegistry& registry, bool check_files) {
    require(!registry.entries.empty(), ErrorKind::InvalidArgument, "model registry is empty");
    for (std::size_t k = 0; k < registry.entries.size(); ++k) {
        const RegistryEntry& e = registry.entries[k];
        require(std::isfinite(e.sigma) && e.sigma > 0.0, ErrorKind::InvalidArgument,
                "registry sigma must be positive");
        if (k > 0) {
            require(e.sigma > registry.entries[k - 1].sigma, ErrorKind::InvalidArgument,
                    "registry sigmas must be strictly increasing");
        }
        if (check_files) {
            const RdnModel m = load_weights(e.weights_path);
            require(std::abs(m.meta.trained_sigma - e.sigma) <= 1e-6 * std::max(1.0, e.sigma),
                    ErrorKind::Format,
                    e.weights_path.string() + " was trained at sigma " + format_sigma(m.meta.trained_sigma) +
                        ", registry says " + format_sigma(e.sigma));
        }
    }
}

ModelRegistry load_registry(const fs::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open registry " + path.string());
    ModelRegistry reg;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header && line.rfind("sigma,", 0) == 0) {
            header = false;
            continue;
        }
        header = false;
        const auto fields = split(line, ',');
        require(fields.size() == 2, ErrorKind::Format, "registry rows need 'sigma,weights_path': " + line);
        fs::path weights = fields[1];
        if (weights.is_relative()) weights = path.parent_path() / weights;
        reg.entries.push_back({parse_double(fields[0], "registry sigma"), weights});
    }
    validate(reg, false);
    return reg;
}

void save_registry(const ModelRegistry& registry, const fs::path& path) {
    validate(registry, false);
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
    out << "sigma,weights_path\n";
    for (const auto& e : registry.entries) out << format_sigma(e.sigma) << ',' << e.weights_path.string() << '\n';
}

RegistryEntry select_model(const ModelRegistry& registry, double fwhm) {
    validate(registry, false);
    const double target = sigma_from_fwhm(fwhm);
    const RegistryEntry* best = &registry.entries.front();
    double best_dist = std::abs(best->sigma - target);
    for (const RegistryEntry& e : registry.entries) {
        const double dist = std::abs(e.sigma - target);
        // Entries ascend, so only a strictly (beyond rounding) closer one wins a tie.
        if (dist < best_dist - 1e-12 * std::max(1.0, target)) {
            best = &e;
            best_dist = dist;
        }
    }
    return *best;
}

// ---- prep -------------------------------------------------------------------

Image center_crop(const Image& img, int crop) {
    require(crop >= 1, ErrorKind::InvalidArgument, "crop size must be positive");
    require(img.height >= crop && img.width >= crop, ErrorKind::DimensionMismatch,
            "image " + std::to_string(img.height) + "x" + std::to_string(img.width) + " is smaller than crop " +
                std::to_string(crop));
    const int y0 = (img.height - crop) / 2;
    const int x0 = (img.width - crop) / 2;
    Image out(crop, crop, img.channels);
    const int c = img.channels;
    for (int y = 0; y < crop; ++y) {
        const float* src = &img.data[(static_cast<std::size_t>(y0 + y) * img.width + x0) * c];
        std::copy(src, src + static_cast<std::size_t>(crop) * c,
                  &out.data[static_cast<std::size_t>(y) * crop * c]);
    }
    return out;
}

Image to_luma(const Image& img) {
    if (img.channels == 1) return img;
    Image out(img.height, img.width, 1);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const float* p = &img.data[i * 3];
        out.data[i] = std::clamp(0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2], 0.0f, 1.0f);
    }
    return out;
}

PrepManifest prep(const fs::path& dataset_dir, const fs::path& output_dir, const PrepOptions& options) {
    require(options.crop >= 1 && options.tile >= 1, ErrorKind::InvalidArgument, "crop and tile must be positive");
    require(!options.sigmas.empty(), ErrorKind::InvalidArgument, "prep needs at least one sigma");
    for (double s : options.sigmas) {
        require(std::isfinite(s) && s > 0.0, ErrorKind::InvalidArgument, "prep sigmas must be positive");
    }
    const std::vector<fs::path> files = list_images(dataset_dir);
    require(!files.empty(), ErrorKind::InvalidArgument, "no images found in " + dataset_dir.string());

    std::error_code ec;
    fs::create_directories(output_dir / "gt", ec);
    require(!ec, ErrorKind::Io, "cannot create " + (output_dir / "gt").string() + ": " + ec.message());
    std::vector<std::string> blur_dirs;
    for (double s : options.sigmas) {
        blur_dirs.push_back("blur_s" + format_sigma(s));
        fs::create_directories(output_dir / blur_dirs.back(), ec);
        require(!ec, ErrorKind::Io, "cannot create " + (output_dir / blur_dirs.back()).string());
    }

    const std::string ext = options.tile_format == ImageFormat::RawF32 ? ".raw" : ".png";
    std::vector<std::vector<PrepRecord>> per_image(files.size());
    std::vector<int> tiles_per_image(files.size(), 0);
    parallel_for(files.size(), [&](std::size_t k) {
        const fs::path& file = files[k];
        const std::string stem = file.stem().string();
        const Image cropped = to_luma(center_crop(load_image(file), options.crop));
        const TileGrid grid = tile(cropped, options.tile);
        tiles_per_image[k] = static_cast<int>(grid.tiles.size());
        for (int r = 0; r < grid.rows; ++r) {
            for (int c = 0; c < grid.cols; ++c) {
                const Image& gt = grid.tile_at(r, c);
                const std::string name = stem + "_r" + std::to_string(r) + "_c" + std::to_string(c) + ext;
                const fs::path gt_rel = fs::path("gt") / name;
                save_image(gt, output_dir / gt_rel, options.tile_format);
                for (std::size_t si = 0; si < options.sigmas.size(); ++si) {
                    const fs::path blur_rel = fs::path(blur_dirs[si]) / name;
                    save_image(blur(gt, options.sigmas[si]), output_dir / blur_rel, options.tile_format);
                    per_image[k].push_back({stem, r, c, options.sigmas[si], gt_rel, blur_rel});
                }
            }
        }
    });

    PrepManifest manifest;
    manifest.output_dir = output_dir;
    manifest.crop = options.crop;
    manifest.tile = options.tile;
    manifest.sigmas = options.sigmas;
    for (std::size_t k = 0; k < files.size(); ++k) {
        manifest.sources.push_back(files[k].stem().string());
        manifest.ground_truth_tiles += tiles_per_image[k];
        manifest.records.insert(manifest.records.end(), per_image[k].begin(), per_image[k].end());
    }
    write_manifest(manifest, output_dir / "manifest.csv");
    return manifest;
}

void write_manifest(const PrepManifest& manifest, const fs::path& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
    out << "# crop=" << manifest.crop << " tile=" << manifest.tile << " sigmas=";
    for (std::size_t k = 0; k < manifest.sigmas.size(); ++k) {
        out << (k ? "," : "") << format_sigma(manifest.sigmas[k]);
    }
    out << " sources=" << manifest.sources.size() << " ground_truth_tiles=" << manifest.ground_truth_tiles << '\n';
    out << "source,tile_row,tile_col,sigma,ground_truth,blurred\n";
    for (const PrepRecord& r : manifest.records) {
        out << r.source << ',' << r.tile_row << ',' << r.tile_col << ',' << format_sigma(r.sigma) << ','
            << r.ground_truth.generic_string() << ',' << r.blurred.generic_string() << '\n';
    }
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

PrepManifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open manifest " + path.string());
    PrepManifest m;
    m.output_dir = path.parent_path();
    std::string line;
    bool seen_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream kv(line.substr(1));
            std::string token;
            while (kv >> token) {
                const auto eq = token.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = token.substr(0, eq);
                const std::string value = token.substr(eq + 1);
                if (key == "crop") m.crop = static_cast<int>(parse_double(value, key));
                else if (key == "tile") m.tile = static_cast<int>(parse_double(value, key));
                else if (key == "ground_truth_tiles") m.ground_truth_tiles = static_cast<int>(parse_double(value, key));
                else if (key == "sigmas") {
                    for (const auto& s : split(value, ',')) m.sigmas.push_back(parse_double(s, key));
                }
            }
            continue;
        }
        if (!seen_header) {
            require(line == "source,tile_row,tile_col,sigma,ground_truth,blurred", ErrorKind::Format,
                    "unexpected manifest header: " + line);
            seen_header = true;
            continue;
        }
        const auto f = split(line, ',');
        require(f.size() == 6, ErrorKind::Format, "manifest rows need 6 fields: " + line);
        PrepRecord r;
        r.source = f[0];
        r.tile_row = static_cast<int>(parse_double(f[1], "tile_row"));
        r.tile_col = static_cast<int>(parse_double(f[2], "tile_col"));
        r.sigma = parse_double(f[3], "sigma");
        r.ground_truth = f[4];
        r.blurred = f[5];
        if (m.sources.empty() || m.sources.back() != r.source) m.sources.push_back(r.source);
        m.records.push_back(std::move(r));
    }
    require(seen_header, ErrorKind::Format, "manifest has no header: " + path.string());
    return m;
}

std::vector<TrainingPair> load_training_pairs(const PrepManifest& manifest, double sigma, int limit) {
    std::vector<const PrepRecord*> chosen;
    for (const PrepRecord& r : manifest.records) {
        if (std::abs(r.sigma - sigma) <= 1e-9 * std::max(1.0, sigma)) chosen.push_back(&r);
        if (limit >= 0 && static_cast<int>(chosen.size()) >= limit) break;
    }
    require(!chosen.empty(), ErrorKind::InvalidArgument,
            "manifest has no pairs for sigma " + format_sigma(sigma));
    std::vector<TrainingPair> pairs(chosen.size());
    parallel_for(chosen.size(), [&](std::size_t k) {
        pairs[k].input = to_luma(load_image(manifest.output_dir / chosen[k]->blurred));
        pairs[k].target = to_luma(load_image(manifest.output_dir / chosen[k]->ground_truth));
    });
    return pairs;
}

// ---- deblur -----------------------------------------------------------------

Image deblur(const Image& input, const RdnModel& model, const DeblurOptions& options) {
    validate(input);
    validate_shapes(model);
    return per_channel(input, [&](const Image& plane) {
        if (options.overlap > 0) {
            OverlapGrid grid = tile_overlapping(plane, options.tile_size, options.overlap);
            parallel_for(grid.tiles.size(), [&](std::size_t k) { grid.tiles[k] = forward(model, grid.tiles[k]); });
            return stitch_feathered(grid);
        }
        TileGrid grid = tile(plane, options.tile_size);
        parallel_for(grid.tiles.size(), [&](std::size_t k) { grid.tiles[k] = forward(model, grid.tiles[k]); });
        return stitch(grid, plane.height, plane.width);
    });
}

VolumeStack deblur(const VolumeStack& input, const RdnModel& model, const DeblurOptions& options) {
    validate(input);
    VolumeStack out;
    out.slices.reserve(input.slices.size());
    for (const Image& s : input.slices) out.slices.push_back(deblur(s, model, options));
    return out;
}

VolumeStack load_volume(const fs::path& dir) {
    VolumeStack vol;
    for (const fs::path& f : list_images(dir)) vol.slices.push_back(load_image(f));
    validate(vol);
    return vol;
}

// ---- benchmark ------------------------------------------------------------------

BenchmarkResult benchmark(const Image& original, double sigma, const RdnModel& model, const DeconvConfig& cfg,
                          const DeblurOptions& options) {
    validate(original);
    validate(cfg);
    BenchmarkResult r;
    r.sigma = sigma;
    r.model_sigma = model.meta.trained_sigma > 0.0f ? model.meta.trained_sigma : sigma;
    r.original = original;
    r.blurred = blur(original, sigma);

    const PsfKernel true_psf = make_gaussian_kernel(sigma, default_radius(sigma));
    const PsfKernel init_psf = make_gaussian_kernel(r.model_sigma, default_radius(std::max(r.model_sigma, sigma)));
    bool first = true;
    r.blind = per_channel(r.blurred, [&](const Image& plane) {
        BlindResult b = blind_deconv(plane, init_psf, cfg);
        if (first) {
            r.blind_psf = b.psf;
            first = false;
        }
        return b.image;
    });
    r.rl = per_channel(r.blurred, [&](const Image& plane) { return richardson_lucy(plane, true_psf, cfg); });
    r.proposed = deblur(r.blurred, model, options);
    r.report = build_report(original, {{"blurred", r.blurred}, {"Deconv", r.blind}, {"RL", r.rl}, {"proposed", r.proposed}});
    return r;
}

BenchmarkResult benchmark(const Image& original, double sigma, const ModelRegistry& registry, const DeconvConfig& cfg,
                          const DeblurOptions& options) {
    const RegistryEntry entry = select_model(registry, fwhm_from_sigma(sigma));
    RdnModel model = load_weights(entry.weights_path);
    if (!(model.meta.trained_sigma > 0.0f)) model.meta.trained_sigma = static_cast<float>(entry.sigma);
    return benchmark(original, sigma, model, cfg, options);
}

void write_benchmark_artifacts(const BenchmarkResult& result, const fs::path& dir, int row) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorKind::Io, "cannot create " + dir.string());
    require(row >= 0 && row < result.original.height, ErrorKind::InvalidArgument,
            "line profile row " + std::to_string(row) + " outside image");
    write_report_csv(result.report, dir / "report.csv");
    save_image(result.original, dir / "original.png", ImageFormat::Png16);
    save_image(result.blurred, dir / "blurred.png", ImageFormat::Png16);
    save_image(result.blind, dir / "deconv.png", ImageFormat::Png16);
    save_image(result.rl, dir / "rl.png", ImageFormat::Png16);
    save_image(result.proposed, dir / "proposed.png", ImageFormat::Png16);

    std::ofstream psf(dir / "deconv_psf.csv");
    psf << std::setprecision(9);
    for (int dy = -result.blind_psf.radius; dy <= result.blind_psf.radius; ++dy) {
        for (int dx = -result.blind_psf.radius; dx <= result.blind_psf.radius; ++dx) {
            psf << (dx > -result.blind_psf.radius ? "," : "") << result.blind_psf.at(dy, dx);
        }
        psf << '\n';
    }

    std::ofstream prof(dir / "line_profile.csv");
    require(static_cast<bool>(prof), ErrorKind::Io, "cannot write line profile in " + dir.string());
    prof << "x,original,blurred,deconv,rl,proposed\n" << std::setprecision(6);
    const auto mean_at = [&](const Image& img, int x) {
        double acc = 0.0;
        for (int c = 0; c < img.channels; ++c) acc += img.at(row, x, c);
        return acc / img.channels;
    };
    for (int x = 0; x < result.original.width; ++x) {
        prof << x << ',' << mean_at(result.original, x) << ',' << mean_at(result.blurred, x) << ','
             << mean_at(result.blind, x) << ',' << mean_at(result.rl, x) << ',' << mean_at(result.proposed, x) << '\n';
    }
}

// ---- resolution -------------------------------------------------------------

ResolutionReport resolution_report(const EdgeProfile& before, const EdgeProfile& after) {
    ResolutionReport r;
    r.before = estimate_fwhm_from_edge(before);
    r.after = estimate_fwhm_from_edge(after);
    if (r.before.ok() && r.after.ok()) r.improvement = r.before.fwhm / r.after.fwhm;
    return r;
}

ResolutionReport resolution_report(const Image& before, const Image& after, int row, double pitch_um, int x_begin,
                                   int x_end) {
    require(before.height == after.height && before.width == after.width, ErrorKind::DimensionMismatch,
            "before and after images differ in size");
    return resolution_report(edge_profile_from_row(to_luma(before), row, pitch_um, x_begin, x_end),
                             edge_profile_from_row(to_luma(after), row, pitch_um, x_begin, x_end));
}

std::string format_resolution(const ResolutionReport& report) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    const auto side = [&](const EdgeFit& f) {
        if (f.ok()) {
            os << f.fwhm;
        } else {
            os << "n/a (" << to_string(f.status) << ")";
        }
    };
    os << "FWHM ";
    side(report.before);
    os << " -> ";
    side(report.after);
    os << " um";
    if (report.improvement) os << ", resolution improved " << *report.improvement << "x";
    return os.str();
}

}  // namespace deblur
