#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "deblur/image.hpp"

namespace deblur {

/// PSNR of identical images; rendered as "inf" in reports.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double mse(const Image& a, const Image& b);
/// 10 log10(1 / mse) with MAX = 1.
double psnr_from_mse(double mse_value);
double psnr(const Image& a, const Image& b);

struct SsimParams {
    int window = 11;
    double window_sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

/// Mean SSIM over all fully-contained Gaussian windows. Multi-channel images
/// average the per-channel values.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

struct MetricsEntry {
    std::string method;
    double mse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    bool best_mse = false;
    bool best_psnr = false;
    bool best_ssim = false;
};

struct MetricsReport {
    std::vector<MetricsEntry> entries;

    const MetricsEntry* find(const std::string& method) const;
};

/// Recomputes the best-per-metric flags (lowest MSE, highest PSNR and SSIM).
void flag_best(MetricsReport& report);

MetricsReport build_report(const Image& original, const std::vector<std::pair<std::string, Image>>& candidates);

/// `method,mse,psnr_db,ssim`, six significant digits, "inf" for identical images.
std::string to_csv(const MetricsReport& report);
MetricsReport parse_report_csv(const std::string& text);
void write_report_csv(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace deblur
