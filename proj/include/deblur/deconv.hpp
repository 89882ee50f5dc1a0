#pragma once

#include <utility>

#include "deblur/image.hpp"
#include "deblur/psf.hpp"

namespace deblur {

struct DeconvConfig {
    int iterations = 20;
    double epsilon = 1e-12;  // floor on the re-blurred estimate before dividing
    bool clamp_nonneg = true;
};

void validate(const DeconvConfig& cfg);

/// Richardson-Lucy with a known PSF:
///   O <- O * correlate(I / max(convolve(O, psf), eps), psf),  O_0 = I.
/// Replicated borders, clamped to [0,1] only after the last iteration.
Image richardson_lucy(const Image& img, const PsfKernel& psf, const DeconvConfig& cfg = {});
Plane richardson_lucy(const Plane& observed, const PsfKernel& psf, const DeconvConfig& cfg = {});

struct BlindResult {
    Image image;
    PsfKernel psf;
};

/// Alternating Richardson-Lucy: per iteration one image update with the PSF
/// held fixed, then one multiplicative PSF update with the image held
/// fixed, renormalizing the PSF to unit sum.
BlindResult blind_deconv(const Image& img, const PsfKernel& psf_init, const DeconvConfig& cfg = {});

}  // namespace deblur
