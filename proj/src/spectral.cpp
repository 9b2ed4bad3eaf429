#include "downscale/spectral.hpp"

#include <cmath>
#include <stdexcept>

namespace downscale {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Direct 1D DFT along rows of an h x w complex array (row-column
// decomposition keeps the full transform at O(HW(H+W)) which is plenty at
// desk scale). sign = -1 forward, +1 inverse (unnormalized).
void dft_rows(std::vector<std::complex<double>>& a, int h, int w, int sign) {
    std::vector<std::complex<double>> twiddle(static_cast<size_t>(w) * w);
    for (int q = 0; q < w; ++q)
        for (int x = 0; x < w; ++x) {
            double ang = sign * kTwoPi * q * x / w;
            twiddle[static_cast<size_t>(q) * w + x] = {std::cos(ang), std::sin(ang)};
        }
    std::vector<std::complex<double>> tmp(static_cast<size_t>(h) * w);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        const std::complex<double>* row = a.data() + static_cast<size_t>(y) * w;
        std::complex<double>* out = tmp.data() + static_cast<size_t>(y) * w;
        for (int q = 0; q < w; ++q) {
            std::complex<double> acc{0.0, 0.0};
            const std::complex<double>* tw = twiddle.data() + static_cast<size_t>(q) * w;
            for (int x = 0; x < w; ++x) acc += row[x] * tw[x];
            out[q] = acc;
        }
    }
    a.swap(tmp);
}

void transpose(std::vector<std::complex<double>>& a, int h, int w) {
    std::vector<std::complex<double>> t(a.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) t[static_cast<size_t>(x) * h + y] = a[static_cast<size_t>(y) * w + x];
    a.swap(t);
}

}  // namespace

Spectrum dft2(const std::vector<double>& plane, int h, int w) {
    if (h < 1 || w < 1 || plane.size() != static_cast<size_t>(h) * w)
        throw std::invalid_argument("dft2: bad dimensions");
    std::vector<std::complex<double>> a(plane.size());
    for (size_t i = 0; i < plane.size(); ++i) a[i] = {plane[i], 0.0};
    dft_rows(a, h, w, -1);
    transpose(a, h, w);
    dft_rows(a, w, h, -1);
    transpose(a, w, h);
    Spectrum s;
    s.h = h;
    s.w = w;
    s.coef = std::move(a);
    return s;
}

std::vector<double> idft2(const Spectrum& spec) {
    const int h = spec.h, w = spec.w;
    std::vector<std::complex<double>> a = spec.coef;
    dft_rows(a, h, w, +1);
    transpose(a, h, w);
    dft_rows(a, w, h, +1);
    transpose(a, w, h);
    std::vector<double> out(a.size());
    const double norm = 1.0 / (static_cast<double>(h) * w);
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i].real() * norm;
    return out;
}

SmoothingStrength::SmoothingStrength(double a) : alpha(a) {
    if (!(a >= 0.0 && a <= 0.8))
        throw std::invalid_argument("SmoothingStrength: alpha must lie in [0, 0.8]");
}

std::vector<double> gaussian_lowpass(int h, int w, SmoothingStrength alpha) {
    const double half_band = 0.5 * std::min(h, w) * (1.0 - alpha.alpha);
    const double sigma = 0.5 * std::max(1.0, half_band);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    std::vector<double> filt(static_cast<size_t>(h) * w);
    for (int p = 0; p < h; ++p) {
        const double ky = freq_index(p, h);
        for (int q = 0; q < w; ++q) {
            const double kx = freq_index(q, w);
            filt[static_cast<size_t>(p) * w + q] = std::exp(-(kx * kx + ky * ky) * inv2s2);
        }
    }
    return filt;
}

std::vector<double> smooth_plane(const std::vector<double>& plane, int h, int w,
                                 SmoothingStrength alpha) {
    if (alpha.alpha == 0.0) return plane;  // identity by contract
    Spectrum s = dft2(plane, h, w);
    const std::vector<double> filt = gaussian_lowpass(h, w, alpha);
    for (size_t i = 0; i < s.coef.size(); ++i) s.coef[i] *= filt[i];
    return idft2(s);
}

Field smooth(const Field& field, SmoothingStrength alpha) {
    if (alpha.alpha == 0.0) return field;
    const int h = field.grid.h, w = field.grid.w, c = field.n_channels();
    Field out = field;
    std::vector<double> plane(static_cast<size_t>(h) * w);
    for (int ch = 0; ch < c; ++ch) {
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col) plane[static_cast<size_t>(r) * w + col] = field.at(r, col, ch);
        std::vector<double> sm = smooth_plane(plane, h, w, alpha);
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col) out.at(r, col, ch) = sm[static_cast<size_t>(r) * w + col];
    }
    return out;
}

SmoothingStrength sample_alpha(Rng& rng) { return SmoothingStrength(0.8 * rng.uniform()); }

}  // namespace downscale
