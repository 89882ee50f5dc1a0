#include "deblur/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "deblur/error.hpp"

namespace deblur {

namespace {

void check_same_shape(const Image& a, const Image& b) {
    require(!a.empty() && a.same_shape(b) && a.data.size() == b.data.size(), ErrorKind::DimensionMismatch,
            "images differ in shape: " + std::to_string(a.height) + "x" + std::to_string(a.width) + "x" +
                std::to_string(a.channels) + " vs " + std::to_string(b.height) + "x" +
                std::to_string(b.width) + "x" + std::to_string(b.channels));
}

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(size);
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        w[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable "valid" filtering: output is (h - n + 1) x (w - n + 1).
Plane filter_valid(const Plane& in, const std::vector<double>& win) {
    const int n = static_cast<int>(win.size());
    const int oh = in.height - n + 1;
    const int ow = in.width - n + 1;
    Plane horiz(in.height, ow);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) acc += win[k] * in.at(y, x + k);
            horiz.at(y, x) = acc;
        }
    }
    Plane out(oh, ow);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) acc += win[k] * horiz.at(y + k, x);
            out.at(y, x) = acc;
        }
    }
    return out;
}

double ssim_plane(const Plane& a, const Plane& b, const SsimParams& p) {
    const std::vector<double> win = gaussian_window(p.window, p.window_sigma);
    Plane aa(a.height, a.width), bb(a.height, a.width), ab(a.height, a.width);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        aa.data[i] = a.data[i] * a.data[i];
        bb.data[i] = b.data[i] * b.data[i];
        ab.data[i] = a.data[i] * b.data[i];
    }
    const Plane mu_a = filter_valid(a, win);
    const Plane mu_b = filter_valid(b, win);
    const Plane s_aa = filter_valid(aa, win);
    const Plane s_bb = filter_valid(bb, win);
    const Plane s_ab = filter_valid(ab, win);

    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.data.size(); ++i) {
        const double ma = mu_a.data[i];
        const double mb = mu_b.data[i];
        const double va = s_aa.data[i] - ma * ma;
        const double vb = s_bb.data[i] - mb * mb;
        const double cov = s_ab.data[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(mu_a.data.size());
}

std::string format_value(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

double parse_value(const std::string& s) {
    if (s == "inf") return kPsnrIdentical;
    if (s == "-inf") return -kPsnrIdentical;
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        fail(ErrorKind::Format, "not a number in report: '" + s + "'");
    }
    require(used == s.size(), ErrorKind::Format, "trailing characters in report value: '" + s + "'");
    return v;
}

}  // namespace

double mse(const Image& a, const Image& b) {
    check_same_shape(a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

double psnr_from_mse(double mse_value) {
    require(mse_value >= 0.0, ErrorKind::InvalidArgument, "MSE must be non-negative");
    if (mse_value == 0.0) {
        return kPsnrIdentical;
    }
    return 10.0 * std::log10(1.0 / mse_value);
}

double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

double ssim(const Image& a, const Image& b, const SsimParams& params) {
    check_same_shape(a, b);
    require(a.height >= params.window && a.width >= params.window, ErrorKind::DimensionMismatch,
            "SSIM needs images of at least " + std::to_string(params.window) + "x" +
                std::to_string(params.window));
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        total += ssim_plane(to_plane(extract_channel(a, c)), to_plane(extract_channel(b, c)), params);
    }
    return total / a.channels;
}

const MetricsEntry* MetricsReport::find(const std::string& method) const {
    auto it = std::find_if(entries.begin(), entries.end(), [&](const MetricsEntry& e) { return e.method == method; });
    return it == entries.end() ? nullptr : &*it;
}

void flag_best(MetricsReport& report) {
    if (report.entries.empty()) return;
    double best_mse = report.entries.front().mse;
    double best_psnr = report.entries.front().psnr;
    double best_ssim = report.entries.front().ssim;
    for (const auto& e : report.entries) {
        best_mse = std::min(best_mse, e.mse);
        best_psnr = std::max(best_psnr, e.psnr);
        best_ssim = std::max(best_ssim, e.ssim);
    }
    for (auto& e : report.entries) {
        e.best_mse = e.mse == best_mse;
        e.best_psnr = e.psnr == best_psnr;
        e.best_ssim = e.ssim == best_ssim;
    }
}

MetricsReport build_report(const Image& original, const std::vector<std::pair<std::string, Image>>& candidates) {
    require(!candidates.empty(), ErrorKind::InvalidArgument, "metrics report needs at least one candidate");
    MetricsReport report;
    for (const auto& [label, img] : candidates) {
        MetricsEntry e;
        e.method = label;
        e.mse = mse(original, img);
        e.psnr = psnr_from_mse(e.mse);
        e.ssim = ssim(original, img);
        report.entries.push_back(e);
    }
    flag_best(report);
    return report;
}

std::string to_csv(const MetricsReport& report) {
    std::ostringstream os;
    os << "method,mse,psnr_db,ssim\n";
    for (const auto& e : report.entries) {
        os << e.method << ',' << format_value(e.mse) << ',' << format_value(e.psnr) << ',' << format_value(e.ssim)
           << '\n';
    }
    return os.str();
}

MetricsReport parse_report_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line == "method,mse,psnr_db,ssim", ErrorKind::Format,
            "metrics report must start with header 'method,mse,psnr_db,ssim'");
    MetricsReport report;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream row(line);
        std::string field;
        while (std::getline(row, field, ',')) fields.push_back(field);
        require(fields.size() == 4, ErrorKind::Format, "metrics report row needs 4 fields: " + line);
        MetricsEntry e;
        e.method = fields[0];
        e.mse = parse_value(fields[1]);
        e.psnr = parse_value(fields[2]);
        e.ssim = parse_value(fields[3]);
        report.entries.push_back(e);
    }
    flag_best(report);
    return report;
}

void write_report_csv(const MetricsReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
    out << to_csv(report);
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace deblur
