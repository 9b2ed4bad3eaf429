#pragma once

#include <functional>

#include "downscale/diffusion.hpp"
#include "downscale/grid.hpp"
#include "downscale/rng.hpp"

namespace downscale {

// Monotone decreasing noise levels sigma_1 > ... > sigma_N produced by the
// power-law schedule sigma_i = (smax^(1/rho) + (i-1)/(N-1) * (smin^(1/rho) -
// smax^(1/rho)))^rho. Endpoints are pinned to sigma_max / sigma_min exactly.
struct SigmaSchedule {
    int n = 128;
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    std::vector<double> levels;
};

SigmaSchedule edm_schedule(int n = 128, double sigma_min = 0.002, double sigma_max = 80.0,
                           double rho = 7.0);

// Wrapped denoiser D(x, sigma) with conditioning already bound.
using DenoiserFn = std::function<Field(const Field& x, double sigma)>;
using ScalarDenoiserFn = std::function<double(double x, double sigma)>;

// One explicit Euler step of the probability-flow ODE
// dx/dsigma = (x - D(x, sigma)) / sigma, from sigma_hi down to sigma_lo.
Field pf_ode_step(const Field& x, double sigma_hi, double sigma_lo, const DenoiserFn& denoiser);
double pf_ode_step(double x, double sigma_hi, double sigma_lo, const ScalarDenoiserFn& denoiser);

// Integrates the PF-ODE from x ~ N(0, sigma_max^2 I) down to sigma_min.
// `proto` supplies the grid and channel layout of the state. Deterministic
// given the seed; throws on non-finite intermediate states.
Field sample(const DenoiserFn& denoiser, const Field& proto, const SigmaSchedule& schedule,
             uint64_t seed);

// Euler-Maruyama discretization of the reverse SDE over the same sigma grid:
//   x <- x + 2 sigma_i score (sigma_i - sigma_{i+1}) + sqrt(2 sigma_i dsigma) z,
// with score = (D - x) / sigma_i^2. Diagnostic path; the product path is the
// PF-ODE sampler above.
Field sde_sample(const DenoiserFn& denoiser, const Field& proto, const SigmaSchedule& schedule,
                 uint64_t seed);

struct Ensemble {
    std::vector<Field> members;
    uint64_t base_seed = 0;
    std::vector<uint64_t> member_seeds;
};

// n independent members; member k runs on its own stream seeded with
// child_seed(base_seed, k). Members are generated in parallel and the result
// is bit-identical to sequential generation.
Ensemble sample_ensemble(const DenoiserFn& denoiser, const Field& proto,
                         const SigmaSchedule& schedule, int n, uint64_t base_seed,
                         bool use_sde = false);

// Analytic testbed: per-pixel conditional law u ~ N(a * cond + b, s^2).
struct GaussianTaskSpec {
    double gain_a = 1.0;
    double offset_b = 0.0;
    double noise_std = 1.0;  // s > 0
};

// Exact posterior-mean denoiser for the Gaussian task:
// D*(x, sigma) = m + s^2/(s^2 + sigma^2) * (x - m) with m = a * cond + b.
Field oracle_denoiser(const GaussianTaskSpec& task, const Field& u_noisy, const Field& cond,
                      double sigma);

// The same denoiser with the conditioning mean bound, ready for sample().
DenoiserFn make_oracle_denoiser(const GaussianTaskSpec& task, Field cond_on_fine_grid);

}  // namespace downscale
