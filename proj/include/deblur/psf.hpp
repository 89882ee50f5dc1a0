#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deblur/image.hpp"

namespace deblur {

/// 2*sqrt(2 ln 2): FWHM of a Gaussian in units of its standard deviation.
inline constexpr double kFwhmPerSigma = 2.3548200450309493;

/// Discretized isotropic Gaussian PSF, (2*radius+1)^2 weights summing to 1.
/// A kernel refined by blind deconvolution keeps the Gaussian sigma it was
/// seeded with; only its weights change.
struct PsfKernel {
    double sigma = 0.0;
    int radius = 0;
    std::vector<double> values;

    int side() const { return 2 * radius + 1; }
    /// Weight at offset (dy, dx), both in [-radius, radius].
    double at(int dy, int dx) const {
        return values[static_cast<std::size_t>(dy + radius) * side() + (dx + radius)];
    }
    double& at(int dy, int dx) {
        return values[static_cast<std::size_t>(dy + radius) * side() + (dx + radius)];
    }
};

PsfKernel make_gaussian_kernel(double sigma, int radius);
/// ceil(4 sigma), at least 1.
int default_radius(double sigma);
/// Unit weight at the centre; the identity of convolution.
PsfKernel make_delta_kernel(int radius = 1);

/// Normalized radial second moment sum(k * (dx^2 + dy^2)) / 2; equals
/// sigma^2 for an untruncated Gaussian.
double second_moment(const PsfKernel& psf);

/// "Same"-size convolution with replicated edges. No clamping.
Plane convolve(const Plane& in, const PsfKernel& psf);
/// Correlation with the kernel (convolution with the mirrored kernel).
Plane correlate(const Plane& in, const PsfKernel& psf);

/// Single-channel convolution; output clamped to [0,1].
Image convolve2d(const Image& img, const PsfKernel& psf);

struct BlurOptions {
    double noise_stddev = 0.0;  // additive Gaussian noise, off by default
    std::uint64_t noise_seed = 0;
};

/// Per-channel Gaussian blur with radius ceil(4 sigma); the separable
/// passes are exactly the 2-D normalized kernel.
Image blur(const Image& img, double sigma, const BlurOptions& options = {});
/// Unclamped single-plane blur, used by linearity checks and deconvolution.
Plane blur_plane(const Plane& in, double sigma);

double fwhm_from_sigma(double sigma);
double sigma_from_fwhm(double fwhm);

struct OpticalParams {
    double wavelength_nm = 0.0;
    double numerical_aperture = 0.0;
    double pixel_pitch_um = 1.0;
};

void validate(const OpticalParams& params);

/// Diffraction-limited lateral FWHM 0.51 lambda / NA, in micrometers.
double fwhm_from_optics(const OpticalParams& params);

struct EdgeProfile {
    std::vector<double> positions;   // strictly increasing
    std::vector<double> amplitudes;
};

void validate(const EdgeProfile& profile);

enum class EdgeFitStatus { Ok, BelowResolution, Flat, PoorFit, NotConverged };

std::string to_string(EdgeFitStatus status);

/// Scaled Gaussian CDF fitted to an edge spread function:
///   f(x) = baseline + amplitude * Phi((x - center) / sigma)
/// The derivative (line spread function) has FWHM = 2.3548 sigma.
struct EdgeFit {
    EdgeFitStatus status = EdgeFitStatus::NotConverged;
    double baseline = 0.0;
    double amplitude = 0.0;
    double center = 0.0;
    double sigma = 0.0;
    double fwhm = 0.0;
    double residual_norm = 0.0;
    int iterations = 0;

    bool ok() const { return status == EdgeFitStatus::Ok; }
};

struct EdgeFitOptions {
    double tolerance = 1e-8;  // relative parameter change
    int max_iterations = 200;
    double min_r_squared = 0.8;
};

/// Never throws on a failed fit; the status says why. Throws only when the
/// profile itself is malformed.
EdgeFit estimate_fwhm_from_edge(const EdgeProfile& profile, const EdgeFitOptions& options = {});

/// Row `row` of a single-channel image, positions scaled by pitch.
EdgeProfile edge_profile_from_row(const Image& img, int row, double pitch, int x_begin = 0, int x_end = -1);

/// Two columns (position_um, amplitude); a non-numeric first line is a header.
EdgeProfile read_edge_profile_csv(const std::filesystem::path& path);

struct LabeledFit {
    std::string label;
    EdgeFit fit;
};

void write_edge_fit_csv(const std::filesystem::path& path, const std::vector<LabeledFit>& fits);

}  // namespace deblur
