#include "deblur/deconv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deblur/error.hpp"

namespace deblur {

void validate(const DeconvConfig& cfg) {
    require(cfg.iterations >= 1, ErrorKind::InvalidArgument, "deconvolution needs at least one iteration");
    require(cfg.epsilon > 0.0, ErrorKind::InvalidArgument, "deconvolution epsilon must be positive");
}

namespace {

void check_psf(const PsfKernel& psf) {
    require(psf.radius >= 1 && psf.values.size() == static_cast<std::size_t>(psf.side()) * psf.side(),
            ErrorKind::InvalidArgument, "malformed PSF kernel");
    double sum = 0.0;
    for (double v : psf.values) {
        require(std::isfinite(v) && v >= 0.0, ErrorKind::InvalidArgument, "PSF weights must be non-negative");
        sum += v;
    }
    require(sum > 0.0, ErrorKind::InvalidArgument, "PSF is all zero");
}

// I / max(estimate (*) psf, eps); the floor keeps exact ratios of 1 where
// the estimate already reproduces the observation.
Plane ratio(const Plane& observed, const Plane& reblurred, double eps) {
    Plane r(observed.height, observed.width);
    for (std::size_t i = 0; i < r.data.size(); ++i) {
        r.data[i] = observed.data[i] / std::max(reblurred.data[i], eps);
    }
    return r;
}

void rl_image_step(const Plane& observed, Plane& estimate, const PsfKernel& psf, const DeconvConfig& cfg) {
    const Plane correction = correlate(ratio(observed, convolve(estimate, psf), cfg.epsilon), psf);
    for (std::size_t i = 0; i < estimate.data.size(); ++i) {
        estimate.data[i] *= correction.data[i];
        if (cfg.clamp_nonneg && estimate.data[i] < 0.0) {
            estimate.data[i] = 0.0;
        }
    }
}

// psf(d) <- psf(d) * sum_p ratio(p) O(p - d) / sum_p O(p), then unit sum.
void rl_psf_step(const Plane& observed, const Plane& estimate, PsfKernel& psf, const DeconvConfig& cfg) {
    const Plane r = ratio(observed, convolve(estimate, psf), cfg.epsilon);
    const double flux = std::accumulate(estimate.data.begin(), estimate.data.end(), 0.0);
    if (!(flux > 0.0)) {
        return;
    }
    const int h = estimate.height;
    const int w = estimate.width;
    for (int dy = -psf.radius; dy <= psf.radius; ++dy) {
        for (int dx = -psf.radius; dx <= psf.radius; ++dx) {
            double& k = psf.at(dy, dx);
            if (k == 0.0) {
                continue;
            }
            double acc = 0.0;
            for (int y = 0; y < h; ++y) {
                const int sy = std::clamp(y - dy, 0, h - 1);
                const double* rrow = &r.data[static_cast<std::size_t>(y) * w];
                const double* orow = &estimate.data[static_cast<std::size_t>(sy) * w];
                for (int x = 0; x < w; ++x) {
                    acc += rrow[x] * orow[std::clamp(x - dx, 0, w - 1)];
                }
            }
            k *= acc / flux;
        }
    }
    const double sum = std::accumulate(psf.values.begin(), psf.values.end(), 0.0);
    require(std::isfinite(sum) && sum > 0.0, ErrorKind::Numeric, "PSF update collapsed to zero");
    for (double& v : psf.values) {
        v /= sum;
    }
}

}  // namespace

Plane richardson_lucy(const Plane& observed, const PsfKernel& psf, const DeconvConfig& cfg) {
    validate(cfg);
    check_psf(psf);
    Plane estimate = observed;
    for (int it = 0; it < cfg.iterations; ++it) {
        rl_image_step(observed, estimate, psf, cfg);
    }
    return estimate;
}

Image richardson_lucy(const Image& img, const PsfKernel& psf, const DeconvConfig& cfg) {
    require(img.channels == 1, ErrorKind::InvalidArgument, "richardson_lucy expects a single-channel image");
    return to_image(richardson_lucy(to_plane(img), psf, cfg), true);
}

BlindResult blind_deconv(const Image& img, const PsfKernel& psf_init, const DeconvConfig& cfg) {
    require(img.channels == 1, ErrorKind::InvalidArgument, "blind_deconv expects a single-channel image");
    validate(cfg);
    check_psf(psf_init);

    const Plane observed = to_plane(img);
    Plane estimate = observed;
    PsfKernel psf = psf_init;
    const double init_sum = std::accumulate(psf.values.begin(), psf.values.end(), 0.0);
    for (double& v : psf.values) {
        v /= init_sum;
    }
    for (int it = 0; it < cfg.iterations; ++it) {
        rl_image_step(observed, estimate, psf, cfg);
        rl_psf_step(observed, estimate, psf, cfg);
    }
    return {to_image(estimate, true), psf};
}

}  // namespace deblur
