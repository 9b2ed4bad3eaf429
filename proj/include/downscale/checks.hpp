#pragma once

#include <string>
#include <vector>

namespace downscale::checks {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Preconditioning identities c_skip = sd^2 c_in^2, c_out = sigma sd c_in,
// w(sigma) c_out^2 = 1, each to 1e-12 over 50 log-spaced sigma in [1e-3, 80].
// `perturb` is added to c_skip for fault injection.
CheckResult check_coeff_identities(double perturb = 0.0);

// Schedule endpoints sigma_1 = 80, sigma_128 = 0.002 and strict monotonicity.
CheckResult check_schedule_endpoints();

// Closed-form ensemble CRPS vs piecewise-exact integral of
// (F(z) - 1{z >= y})^2 for 500 random ensembles, n in 1..8; and the n = 1
// absolute-error identity.
CheckResult check_crps_quadrature();

// Analytic Gaussian posterior-mean denoiser pushed through the Tweedie map
// matches the closed-form Gaussian score to 1e-10 at 100 random (x, sigma).
CheckResult check_tweedie();

// Central-difference gradient check (h = 1e-3) on a 1-stage 8x8 U-Net with
// base width 4: 200 random parameters, relative error < 1e-4.
CheckResult check_gradients();

// PF-ODE transport of the analytic Gaussian task on a 16x16 grid, 4096
// samples, 64 steps: per-pixel mean within 3 SE of a*ubar+b and variance
// within 5% of s^2 + sigma_min^2, with at least 95% of pixels passing both.
CheckResult check_gaussian_transport();

// Scalar linear-denoiser ODE: Euler error halves (ratio 2 +- 0.3) as N
// doubles across {16, 32, 64, 128}.
CheckResult check_euler_convergence();

// alpha = 0 bypass bit-exactness, monotone high-frequency energy decay over
// alpha in {0, 0.2, 0.4, 0.6, 0.8}, and DFT round trip to 1e-9.
CheckResult check_spectral_filter();

// The suites run by the oracle-check command, in order.
std::vector<std::string> oracle_check_names();
std::vector<CheckResult> run_oracle_checks(double perturb_coeff = 0.0);

}  // namespace downscale::checks
