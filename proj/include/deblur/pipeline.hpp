#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deblur/deconv.hpp"
#include "deblur/image.hpp"
#include "deblur/image_io.hpp"
#include "deblur/metrics.hpp"
#include "deblur/psf.hpp"
#include "deblur/rdn.hpp"
#include "deblur/train.hpp"

namespace deblur {

// ---- model registry -------------------------------------------------------

struct RegistryEntry {
    double sigma = 0.0;
    std::filesystem::path weights_path;
};

/// One trained model per blur sigma, sorted by strictly increasing sigma.
struct ModelRegistry {
    std::vector<RegistryEntry> entries;
};

/// 0.5, 1, ..., 5: the default training grid.
std::vector<double> default_sigma_grid();

/// Checks ordering; with check_files, also that each file loads and carries
/// a matching trained_sigma.
void validate(const ModelRegistry& registry, bool check_files = false);

/// CSV `sigma,weights_path`; relative paths resolve against the file's directory.
ModelRegistry load_registry(const std::filesystem::path& path);
void save_registry(const ModelRegistry& registry, const std::filesystem::path& path);

/// Nearest sigma to fwhm / 2.3548; ties go to the smaller sigma.
RegistryEntry select_model(const ModelRegistry& registry, double fwhm);

// ---- dataset preparation ----------------------------------------------------

struct PrepRecord {
    std::string source;
    int tile_row = 0;
    int tile_col = 0;
    double sigma = 0.0;
    std::filesystem::path ground_truth;  // relative to the output directory
    std::filesystem::path blurred;
};

struct PrepManifest {
    std::filesystem::path output_dir;
    int crop = 2304;
    int tile = 256;
    std::vector<double> sigmas;
    std::vector<std::string> sources;
    int ground_truth_tiles = 0;
    std::vector<PrepRecord> records;
};

struct PrepOptions {
    int crop = 2304;
    int tile = 256;
    std::vector<double> sigmas{1.0};
    ImageFormat tile_format = ImageFormat::Png16;
};

/// Center-crops every image in `dataset_dir` to crop x crop, cuts
/// tile x tile ground-truth patches and writes one blurred copy per sigma.
/// RGB sources are reduced to luma. Writes `manifest.csv` to `output_dir`.
PrepManifest prep(const std::filesystem::path& dataset_dir, const std::filesystem::path& output_dir,
                  const PrepOptions& options);

Image center_crop(const Image& img, int crop);
Image to_luma(const Image& img);

void write_manifest(const PrepManifest& manifest, const std::filesystem::path& path);
PrepManifest read_manifest(const std::filesystem::path& path);

/// Loads the pairs of one sigma (within 1e-9); limit < 0 loads all.
std::vector<TrainingPair> load_training_pairs(const PrepManifest& manifest, double sigma, int limit = -1);

// ---- deblurring -------------------------------------------------------------

struct DeblurOptions {
    int tile_size = 256;
    int overlap = 0;  // > 0 switches to overlapping tiles with feathered stitching
};

/// Per channel: tile, run the network on every tile, stitch.
Image deblur(const Image& input, const RdnModel& model, const DeblurOptions& options = {});
VolumeStack deblur(const VolumeStack& input, const RdnModel& model, const DeblurOptions& options = {});

/// Slices are the image files of a directory in lexicographic order.
VolumeStack load_volume(const std::filesystem::path& dir);

// ---- comparisons --------------------------------------------------------------

struct BenchmarkResult {
    double sigma = 0.0;
    double model_sigma = 0.0;
    Image original;
    Image blurred;
    Image blind;
    PsfKernel blind_psf;
    Image rl;
    Image proposed;
    MetricsReport report;  // rows: blurred, Deconv, RL, proposed
};

/// Blurs `original` with sigma and restores it with blind deconvolution
/// (seeded from model_sigma), Richardson-Lucy with the true PSF and the RDN.
BenchmarkResult benchmark(const Image& original, double sigma, const RdnModel& model, const DeconvConfig& cfg,
                          const DeblurOptions& options = {});
BenchmarkResult benchmark(const Image& original, double sigma, const ModelRegistry& registry,
                          const DeconvConfig& cfg, const DeblurOptions& options = {});

/// Writes report.csv, every image and line_profile.csv for `row`
/// (channel mean for RGB) into `dir`.
void write_benchmark_artifacts(const BenchmarkResult& result, const std::filesystem::path& dir, int row);

struct ResolutionReport {
    EdgeFit before;
    EdgeFit after;
    /// before.fwhm / after.fwhm; empty unless both fits succeeded.
    std::optional<double> improvement;
};

ResolutionReport resolution_report(const EdgeProfile& before, const EdgeProfile& after);
ResolutionReport resolution_report(const Image& before, const Image& after, int row, double pitch_um,
                                   int x_begin = 0, int x_end = -1);

/// e.g. "FWHM 6.73 -> 3.15 um, resolution improved 2.14x"
std::string format_resolution(const ResolutionReport& report);

}  // namespace deblur
