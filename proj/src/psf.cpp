#include "deblur/psf.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "deblur/error.hpp"

namespace deblur {

PsfKernel make_gaussian_kernel(double sigma, int radius) {
    require(std::isfinite(sigma) && sigma > 0.0, ErrorKind::InvalidArgument, "PSF sigma must be positive");
    require(radius >= 1, ErrorKind::InvalidArgument, "PSF radius must be at least 1");

    PsfKernel k;
    k.sigma = sigma;
    k.radius = radius;
    k.values.resize(static_cast<std::size_t>(k.side()) * k.side());
    const double two_s2 = 2.0 * sigma * sigma;
    double sum = 0.0;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            const double v = std::exp(-static_cast<double>(dx * dx + dy * dy) / two_s2);
            k.at(dy, dx) = v;
            sum += v;
        }
    }
    for (double& v : k.values) {
        v /= sum;
    }
    return k;
}

int default_radius(double sigma) {
    require(std::isfinite(sigma) && sigma > 0.0, ErrorKind::InvalidArgument, "PSF sigma must be positive");
    return std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
}

PsfKernel make_delta_kernel(int radius) {
    require(radius >= 1, ErrorKind::InvalidArgument, "PSF radius must be at least 1");
    PsfKernel k;
    k.radius = radius;
    k.values.assign(static_cast<std::size_t>(k.side()) * k.side(), 0.0);
    k.at(0, 0) = 1.0;
    return k;
}

double second_moment(const PsfKernel& psf) {
    double m = 0.0;
    double total = 0.0;
    for (int dy = -psf.radius; dy <= psf.radius; ++dy) {
        for (int dx = -psf.radius; dx <= psf.radius; ++dx) {
            const double w = psf.at(dy, dx);
            m += w * (dx * dx + dy * dy);
            total += w;
        }
    }
    return m / (2.0 * total);
}

namespace {

Plane pad_replicate(const Plane& in, int r) {
    Plane p(in.height + 2 * r, in.width + 2 * r);
    for (int y = 0; y < p.height; ++y) {
        const int sy = std::clamp(y - r, 0, in.height - 1);
        for (int x = 0; x < p.width; ++x) {
            p.at(y, x) = in.at(sy, std::clamp(x - r, 0, in.width - 1));
        }
    }
    return p;
}

// sign = -1 convolves, +1 correlates.
Plane filter(const Plane& in, const PsfKernel& psf, int sign) {
    require(in.height > 0 && in.width > 0, ErrorKind::InvalidArgument, "cannot filter an empty plane");
    require(psf.radius >= 1 && psf.values.size() == static_cast<std::size_t>(psf.side()) * psf.side(),
            ErrorKind::InvalidArgument, "malformed PSF kernel");
    const int r = psf.radius;
    const Plane padded = pad_replicate(in, r);
    Plane out(in.height, in.width, 0.0);
    const int w = in.width;
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            const double k = psf.at(dy, dx);
            if (k == 0.0) {
                continue;
            }
            const int oy = r + sign * dy;
            const int ox = r + sign * dx;
            for (int y = 0; y < in.height; ++y) {
                const double* src = &padded.data[static_cast<std::size_t>(y + oy) * padded.width + ox];
                double* dst = &out.data[static_cast<std::size_t>(y) * w];
                for (int x = 0; x < w; ++x) {
                    dst[x] += k * src[x];
                }
            }
        }
    }
    return out;
}

std::vector<double> gaussian_taps(double sigma, int radius) {
    std::vector<double> taps(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        taps[i + radius] = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
        sum += taps[i + radius];
    }
    for (double& t : taps) {
        t /= sum;
    }
    return taps;
}

}  // namespace

Plane convolve(const Plane& in, const PsfKernel& psf) { return filter(in, psf, -1); }

Plane correlate(const Plane& in, const PsfKernel& psf) { return filter(in, psf, +1); }

Image convolve2d(const Image& img, const PsfKernel& psf) {
    require(img.channels == 1, ErrorKind::InvalidArgument, "convolve2d expects a single-channel image");
    return to_image(convolve(to_plane(img), psf), true);
}

Plane blur_plane(const Plane& in, double sigma) {
    const int r = default_radius(sigma);
    const std::vector<double> taps = gaussian_taps(sigma, r);
    const int h = in.height;
    const int w = in.width;

    Plane horiz(h, w);
    std::vector<double> row(w + 2 * r);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w + 2 * r; ++x) {
            row[x] = in.at(y, std::clamp(x - r, 0, w - 1));
        }
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = 0; k <= 2 * r; ++k) {
                acc += taps[k] * row[x + k];
            }
            horiz.at(y, x) = acc;
        }
    }

    Plane out(h, w, 0.0);
    for (int k = 0; k <= 2 * r; ++k) {
        const double t = taps[k];
        for (int y = 0; y < h; ++y) {
            const int sy = std::clamp(y + k - r, 0, h - 1);
            const double* src = &horiz.data[static_cast<std::size_t>(sy) * w];
            double* dst = &out.data[static_cast<std::size_t>(y) * w];
            for (int x = 0; x < w; ++x) {
                dst[x] += t * src[x];
            }
        }
    }
    return out;
}

Image blur(const Image& img, double sigma, const BlurOptions& options) {
    require(std::isfinite(sigma) && sigma > 0.0, ErrorKind::InvalidArgument, "blur sigma must be positive");
    require(options.noise_stddev >= 0.0, ErrorKind::InvalidArgument, "noise stddev must be non-negative");
    std::vector<Image> planes = split_channels(img);
    std::mt19937_64 rng(options.noise_seed);
    std::normal_distribution<double> noise(0.0, options.noise_stddev > 0.0 ? options.noise_stddev : 1.0);
    for (Image& p : planes) {
        Plane blurred = blur_plane(to_plane(p), sigma);
        if (options.noise_stddev > 0.0) {
            for (double& v : blurred.data) {
                v += noise(rng);
            }
        }
        p = to_image(blurred, true);
    }
    return merge_channels(planes);
}

double fwhm_from_sigma(double sigma) {
    require(std::isfinite(sigma) && sigma > 0.0, ErrorKind::InvalidArgument, "sigma must be positive");
    return kFwhmPerSigma * sigma;
}

double sigma_from_fwhm(double fwhm) {
    require(std::isfinite(fwhm) && fwhm > 0.0, ErrorKind::InvalidArgument, "FWHM must be positive");
    return fwhm / kFwhmPerSigma;
}

void validate(const OpticalParams& params) {
    require(params.wavelength_nm > 0.0, ErrorKind::InvalidArgument, "wavelength must be positive");
    require(params.numerical_aperture > 0.0 && params.numerical_aperture <= 1.5, ErrorKind::InvalidArgument,
            "numerical aperture must be in (0, 1.5]");
    require(params.pixel_pitch_um > 0.0, ErrorKind::InvalidArgument, "pixel pitch must be positive");
}

double fwhm_from_optics(const OpticalParams& params) {
    validate(params);
    return 0.51 * params.wavelength_nm / params.numerical_aperture / 1000.0;
}

}  // namespace deblur
