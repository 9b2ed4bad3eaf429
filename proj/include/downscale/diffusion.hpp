#pragma once

#include <functional>

#include "downscale/grid.hpp"
#include "downscale/rng.hpp"

namespace downscale {

// Fixed noise-model constants. sigma_data matches the scale assumed by the
// preconditioning; p_mean/p_std parameterize the log-normal training draw.
struct EdmConfig {
    double sigma_data = 0.5;
    double p_mean = -0.5;
    double p_std = 1.5;
    // Training draws are clamped to keep c_noise and the weighting finite.
    double sigma_lo = 1e-4;
    double sigma_hi = 1e3;
};

// Input/output scalings of the wrapped denoiser at noise level sigma.
struct PrecondCoeffs {
    double c_skip;
    double c_out;
    double c_in;
    double c_noise;
};

PrecondCoeffs precond_coeffs(double sigma, const EdmConfig& cfg);

// Effective loss weighting w(sigma) = (sigma^2 + sigma_data^2) /
// (sigma * sigma_data)^2; identically 1 / c_out(sigma)^2.
double loss_weight(double sigma, const EdmConfig& cfg);

// Log-normal training noise level: ln sigma ~ N(p_mean, p_std^2), clamped to
// [sigma_lo, sigma_hi].
double sample_train_sigma(Rng& rng, const EdmConfig& cfg);

// The raw network: receives the channel-concatenated input (c_in-scaled noisy
// state first, conditioning after) and the noise level. The network derives
// its embedding input c_noise = ln(sigma)/4 itself.
using RawNetFn = std::function<Field(const Field& x, double sigma)>;

// Wrapped denoiser output
//   D = c_skip * u_noisy + c_out * F(concat[c_in * u_noisy, cond], c_noise).
Field denoise(const RawNetFn& raw_net, const Field& u_noisy, const Field& cond,
              double sigma, const EdmConfig& cfg);

// Regression target F_target = (u - c_skip * u_noisy) / c_out. Running the
// wrapped denoiser with this as the network output reproduces u.
Field f_target(const Field& u, const Field& u_noisy, double sigma, const EdmConfig& cfg);

// Score estimate (D - u_noisy) / sigma^2.
Field score_from_denoiser(const Field& d_out, const Field& u_noisy, double sigma);

// Single-instance weighted denoising loss
//   w(sigma) * mean((F(concat[c_in*(u+eta), cond], c_noise) - F_target)^2),
// mean taken over grid points and channels. cond is the prepared conditioning
// (already smoothed/upsampled by the caller).
double denoising_loss(const RawNetFn& raw_net, const Field& u, const Field& cond,
                      double sigma, const Field& eta, const EdmConfig& cfg);

// Field helpers shared by the diffusion and sampling paths.
Field concat_fields(const Field& a, const Field& b);
Field scaled(const Field& f, double s);
Field add_scaled(const Field& a, const Field& b, double s);  // a + s * b

}  // namespace downscale
