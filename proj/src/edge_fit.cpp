#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "deblur/error.hpp"
#include "deblur/psf.hpp"

namespace deblur {

void validate(const EdgeProfile& profile) {
    require(profile.positions.size() == profile.amplitudes.size(), ErrorKind::DimensionMismatch,
            "edge profile positions and amplitudes differ in length");
    require(profile.positions.size() >= 8, ErrorKind::InvalidArgument,
            "edge profile needs at least 8 samples");
    for (std::size_t i = 0; i < profile.positions.size(); ++i) {
        require(std::isfinite(profile.positions[i]) && std::isfinite(profile.amplitudes[i]),
                ErrorKind::Numeric, "edge profile contains non-finite values");
        if (i > 0) {
            require(profile.positions[i] > profile.positions[i - 1], ErrorKind::InvalidArgument,
                    "edge profile positions must be strictly increasing");
        }
    }
}

std::string to_string(EdgeFitStatus status) {
    switch (status) {
        case EdgeFitStatus::Ok: return "ok";
        case EdgeFitStatus::BelowResolution: return "below_resolution";
        case EdgeFitStatus::Flat: return "flat_profile";
        case EdgeFitStatus::PoorFit: return "poor_fit";
        case EdgeFitStatus::NotConverged: return "not_converged";
    }
    return "unknown";
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

struct Params {
    double baseline;
    double amplitude;
    double center;
    double log_sigma;
};

double sse(const EdgeProfile& p, const Params& q) {
    const double s = std::exp(q.log_sigma);
    double acc = 0.0;
    for (std::size_t i = 0; i < p.positions.size(); ++i) {
        const double r = p.amplitudes[i] - (q.baseline + q.amplitude * normal_cdf((p.positions[i] - q.center) / s));
        acc += r * r;
    }
    return acc;
}

// Solves the 4x4 system in place by Gaussian elimination with partial pivoting.
bool solve4(std::array<std::array<double, 4>, 4> a, std::array<double, 4> b, std::array<double, 4>& x) {
    for (int col = 0; col < 4; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 4; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (std::abs(a[pivot][col]) < 1e-300) return false;
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (int r = col + 1; r < 4; ++r) {
            const double f = a[r][col] / a[col][col];
            for (int c = col; c < 4; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    for (int r = 3; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < 4; ++c) acc -= a[r][c] * x[c];
        x[r] = acc / a[r][r];
    }
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

// Coarse grid over (center, sigma); baseline and amplitude are solved
// linearly for each candidate.
Params grid_initialize(const EdgeProfile& p, double spacing) {
    const std::size_t n = p.positions.size();
    const double x0 = p.positions.front();
    const double x1 = p.positions.back();
    const double span = x1 - x0;
    const int n_center = static_cast<int>(std::min<std::size_t>(n, 120));
    const int n_sigma = 48;
    const double s_lo = 0.1 * spacing;
    const double s_hi = 0.5 * span;

    double y_mean = 0.0;
    for (double y : p.amplitudes) y_mean += y;
    y_mean /= static_cast<double>(n);

    Params best{y_mean, 0.0, 0.5 * (x0 + x1), std::log(std::max(s_lo, 0.1 * span))};
    double best_sse = std::numeric_limits<double>::infinity();
    std::vector<double> u(n);
    for (int ic = 0; ic < n_center; ++ic) {
        const double center = x0 + span * (ic + 0.5) / n_center;
        for (int is = 0; is < n_sigma; ++is) {
            const double s = s_lo * std::pow(s_hi / s_lo, static_cast<double>(is) / (n_sigma - 1));
            double u_mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                u[i] = normal_cdf((p.positions[i] - center) / s);
                u_mean += u[i];
            }
            u_mean /= static_cast<double>(n);
            double suu = 0.0;
            double suy = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                suu += (u[i] - u_mean) * (u[i] - u_mean);
                suy += (u[i] - u_mean) * (p.amplitudes[i] - y_mean);
            }
            if (suu < 1e-12) continue;
            const double a = suy / suu;
            const Params cand{y_mean - a * u_mean, a, center, std::log(s)};
            const double e = sse(p, cand);
            if (e < best_sse) {
                best_sse = e;
                best = cand;
            }
        }
    }
    return best;
}

}  // namespace

EdgeFit estimate_fwhm_from_edge(const EdgeProfile& profile, const EdgeFitOptions& options) {
    validate(profile);
    const std::size_t n = profile.positions.size();
    EdgeFit fit;

    const auto [lo_it, hi_it] = std::minmax_element(profile.amplitudes.begin(), profile.amplitudes.end());
    const double y_range = *hi_it - *lo_it;
    const double y_scale = std::max({1.0, std::abs(*lo_it), std::abs(*hi_it)});
    if (y_range <= 1e-12 * y_scale) {
        fit.status = EdgeFitStatus::Flat;
        return fit;
    }

    std::vector<double> gaps(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) gaps[i] = profile.positions[i + 1] - profile.positions[i];
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    const double spacing = gaps[gaps.size() / 2];
    const double span = profile.positions.back() - profile.positions.front();
    const double below_resolution_sigma = 0.25 * spacing;

    Params q = grid_initialize(profile, spacing);
    double err = sse(profile, q);
    bool converged = false;
    bool below_resolution = false;
    int iter = 0;

    // Gauss-Newton on (baseline, amplitude, center, log sigma) with step halving.
    for (; iter < options.max_iterations; ++iter) {
        const double s = std::exp(q.log_sigma);
        std::array<std::array<double, 4>, 4> jtj{};
        std::array<double, 4> jtr{};
        for (std::size_t i = 0; i < n; ++i) {
            const double z = (profile.positions[i] - q.center) / s;
            const double cdf = normal_cdf(z);
            const double pdf = normal_pdf(z);
            const double r = profile.amplitudes[i] - (q.baseline + q.amplitude * cdf);
            const std::array<double, 4> j{1.0, cdf, -q.amplitude * pdf / s, -q.amplitude * pdf * z};
            for (int a = 0; a < 4; ++a) {
                jtr[a] += j[a] * r;
                for (int b = 0; b < 4; ++b) jtj[a][b] += j[a] * j[b];
            }
        }
        double max_diag = 0.0;
        for (int a = 0; a < 4; ++a) max_diag = std::max(max_diag, jtj[a][a]);
        for (int a = 0; a < 4; ++a) jtj[a][a] += 1e-12 * max_diag;

        std::array<double, 4> delta{};
        if (!solve4(jtj, jtr, delta)) {
            break;
        }

        double step = 1.0;
        Params trial = q;
        double trial_err = err;
        bool improved = false;
        for (int halving = 0; halving < 40; ++halving, step *= 0.5) {
            trial = Params{q.baseline + step * delta[0], q.amplitude + step * delta[1],
                           q.center + step * delta[2], q.log_sigma + step * delta[3]};
            trial_err = sse(profile, trial);
            if (std::isfinite(trial_err) && trial_err <= err) {
                improved = true;
                break;
            }
        }
        if (!improved) {
            converged = true;  // no descent direction left at working precision
            break;
        }

        const double rel = std::max({std::abs(step * delta[0]) / (std::abs(q.baseline) + y_range),
                                     std::abs(step * delta[1]) / (std::abs(q.amplitude) + y_range),
                                     std::abs(step * delta[2]) / (std::abs(q.center) + span),
                                     std::abs(step * delta[3])});
        q = trial;
        err = trial_err;
        if (std::exp(q.log_sigma) < 0.1 * below_resolution_sigma) {
            below_resolution = true;
            break;
        }
        if (rel < options.tolerance) {
            converged = true;
            ++iter;
            break;
        }
    }

    fit.baseline = q.baseline;
    fit.amplitude = q.amplitude;
    fit.center = q.center;
    fit.sigma = std::exp(q.log_sigma);
    fit.fwhm = kFwhmPerSigma * fit.sigma;
    fit.residual_norm = std::sqrt(err);
    fit.iterations = iter;

    double y_mean = 0.0;
    for (double y : profile.amplitudes) y_mean += y;
    y_mean /= static_cast<double>(n);
    double sst = 0.0;
    for (double y : profile.amplitudes) sst += (y - y_mean) * (y - y_mean);
    const double r_squared = 1.0 - err / sst;

    if (below_resolution || fit.sigma < below_resolution_sigma) {
        fit.status = EdgeFitStatus::BelowResolution;
    } else if (!converged) {
        fit.status = EdgeFitStatus::NotConverged;
    } else if (!(r_squared >= options.min_r_squared)) {
        fit.status = EdgeFitStatus::PoorFit;
    } else {
        fit.status = EdgeFitStatus::Ok;
    }
    return fit;
}

EdgeProfile edge_profile_from_row(const Image& img, int row, double pitch, int x_begin, int x_end) {
    require(img.channels == 1, ErrorKind::InvalidArgument, "edge profiles need a single-channel image");
    require(row >= 0 && row < img.height, ErrorKind::InvalidArgument,
            "scan line " + std::to_string(row) + " outside image");
    require(pitch > 0.0, ErrorKind::InvalidArgument, "pixel pitch must be positive");
    if (x_end < 0) x_end = img.width;
    require(x_begin >= 0 && x_begin < x_end && x_end <= img.width, ErrorKind::InvalidArgument,
            "invalid scan-line column range");
    EdgeProfile p;
    for (int x = x_begin; x < x_end; ++x) {
        p.positions.push_back(x * pitch);
        p.amplitudes.push_back(img.at(row, x));
    }
    return p;
}

EdgeProfile read_edge_profile_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
    EdgeProfile p;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream fields(line);
        double pos = 0.0;
        double amp = 0.0;
        if (!(fields >> pos >> amp)) {
            require(first, ErrorKind::Format, "malformed edge profile row: " + line);
            first = false;
            continue;
        }
        first = false;
        p.positions.push_back(pos);
        p.amplitudes.push_back(amp);
    }
    validate(p);
    return p;
}

void write_edge_fit_csv(const std::filesystem::path& path, const std::vector<LabeledFit>& fits) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
    out << "label,sigma,fwhm,residual_norm,status\n";
    out << std::setprecision(6);
    for (const auto& [label, fit] : fits) {
        out << label << ',' << fit.sigma << ',' << fit.fwhm << ',' << fit.residual_norm << ','
            << to_string(fit.status) << '\n';
    }
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace deblur
