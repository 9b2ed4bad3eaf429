#pragma once

#include <complex>
#include <vector>

#include "downscale/grid.hpp"
#include "downscale/rng.hpp"

namespace downscale {

// Unnormalized 2D DFT of an H x W real plane. Coefficient (p, q) is stored
// row-major; its zero-centered integer frequency is freq_index(p, H) along
// rows and freq_index(q, W) along columns.
struct Spectrum {
    int h = 0, w = 0;
    std::vector<std::complex<double>> coef;

    std::complex<double>& at(int p, int q) { return coef[static_cast<size_t>(p) * w + q]; }
    std::complex<double> at(int p, int q) const { return coef[static_cast<size_t>(p) * w + q]; }
};

// Maps a raw DFT index to the zero-centered frequency in
// [-floor(n/2), ceil(n/2) - 1].
inline int freq_index(int i, int n) { return i <= (n - 1) / 2 ? i : i - n; }

Spectrum dft2(const std::vector<double>& plane, int h, int w);
std::vector<double> idft2(const Spectrum& spec);

// Smoothing strength for the conditioning augmentation; valid range [0, 0.8].
struct SmoothingStrength {
    double alpha = 0.0;
    explicit SmoothingStrength(double a);
};

// Isotropic Gaussian low-pass filter on zero-centered integer frequencies:
// G(kx, ky) = exp(-(kx^2 + ky^2) / (2 sigma_a^2)) with
// sigma_a = max(1, min(H,W)/2 * (1 - alpha)) / 2. Stored in raw DFT layout.
std::vector<double> gaussian_lowpass(int h, int w, SmoothingStrength alpha);

// Per-channel frequency-space smoothing of a field. alpha = 0 bypasses the
// transform entirely and returns the input unchanged.
Field smooth(const Field& field, SmoothingStrength alpha);

// Single-plane variant used by tests and synthetic data generation.
std::vector<double> smooth_plane(const std::vector<double>& plane, int h, int w,
                                 SmoothingStrength alpha);

// Uniform draw from [0, 0.8].
SmoothingStrength sample_alpha(Rng& rng);

}  // namespace downscale
