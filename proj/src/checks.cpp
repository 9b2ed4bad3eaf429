#include "downscale/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "downscale/diffusion.hpp"
#include "downscale/net.hpp"
#include "downscale/rng.hpp"
#include "downscale/sampler.hpp"
#include "downscale/spectral.hpp"
#include "downscale/verify.hpp"

namespace downscale::checks {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

// Exact integral of (F(z) - 1{z >= y})^2 dz for the empirical CDF F of the
// ensemble: the integrand is piecewise constant between the sorted
// breakpoints, so summing segment by segment evaluates the integral without
// any quadrature error. Independent of the pairwise closed form.
double crps_integral_oracle(std::vector<double> members, double y) {
    std::vector<double> breaks = members;
    breaks.push_back(y);
    std::sort(breaks.begin(), breaks.end());
    std::sort(members.begin(), members.end());
    const double n = static_cast<double>(members.size());
    double total = 0.0;
    for (size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double lo = breaks[i], hi = breaks[i + 1];
        if (hi <= lo) continue;
        const double mid = 0.5 * (lo + hi);
        const double cdf =
            static_cast<double>(std::upper_bound(members.begin(), members.end(), mid) -
                                members.begin()) /
            n;
        const double step = mid >= y ? 1.0 : 0.0;
        total += (cdf - step) * (cdf - step) * (hi - lo);
    }
    return total;
}

}  // namespace

CheckResult check_coeff_identities(double perturb) {
    const EdmConfig cfg;
    const double tol = 1e-12;
    double worst = 0.0;
    const int n = 50;
    const double lo = std::log(1e-3), hi = std::log(80.0);
    for (int i = 0; i < n; ++i) {
        const double sigma = std::exp(lo + (hi - lo) * i / (n - 1));
        const PrecondCoeffs c = precond_coeffs(sigma, cfg);
        const double c_skip = c.c_skip + perturb;
        const double sd2 = cfg.sigma_data * cfg.sigma_data;
        worst = std::max(worst, std::abs(c_skip - sd2 * c.c_in * c.c_in));
        worst = std::max(worst, std::abs(c.c_out - sigma * cfg.sigma_data * c.c_in));
        worst = std::max(worst, std::abs(loss_weight(sigma, cfg) * c.c_out * c.c_out - 1.0));
    }
    return {"coefficient-identities", worst <= tol, "max deviation " + fmt(worst)};
}

CheckResult check_schedule_endpoints() {
    const SigmaSchedule s = edm_schedule();
    bool pass = s.levels.size() == 128 && s.levels.front() == 80.0 && s.levels.back() == 0.002;
    for (size_t i = 0; i + 1 < s.levels.size() && pass; ++i)
        if (!(s.levels[i] > s.levels[i + 1])) pass = false;
    return {"schedule-endpoints", pass,
            "sigma_1 = " + fmt(s.levels.front()) + ", sigma_N = " + fmt(s.levels.back())};
}

CheckResult check_crps_quadrature() {
    Rng rng(20250701);
    double worst = 0.0;
    bool n1_exact = true;
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_index(8));
        std::vector<double> members(n);
        const double spread = 0.2 + 3.0 * rng.uniform();
        for (auto& m : members) m = spread * rng.normal();
        const double y = spread * rng.normal();
        const double closed = crps_ensemble(members, y);
        const double integral = crps_integral_oracle(members, y);
        worst = std::max(worst, std::abs(closed - integral));
        if (n == 1 && closed != std::abs(members[0] - y)) n1_exact = false;
    }
    const bool pass = worst <= 1e-6 && n1_exact;
    return {"crps-quadrature", pass,
            "max |closed - integral| " + fmt(worst) + (n1_exact ? "" : ", n=1 identity broken")};
}

CheckResult check_tweedie() {
    Rng rng(424242);
    const Grid g(0, 0, 1, 1, 2, 2);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        GaussianTaskSpec task;
        task.gain_a = 0.5 + rng.uniform();
        task.offset_b = rng.normal();
        task.noise_std = 0.3 + 2.0 * rng.uniform();
        const double sigma = std::exp(rng.uniform(-3.0, 3.0));
        Field cond(g, {{"t2m", "K"}});
        Field x(g, {{"t2m", "K"}});
        for (auto& v : cond.data) v = rng.normal();
        for (auto& v : x.data) v = 3.0 * rng.normal();
        const Field d = oracle_denoiser(task, x, cond, sigma);
        const Field score = score_from_denoiser(d, x, sigma);
        const double s2 = task.noise_std * task.noise_std;
        for (size_t i = 0; i < x.data.size(); ++i) {
            const double m = task.gain_a * cond.data[i] + task.offset_b;
            const double analytic = -(x.data[i] - m) / (s2 + sigma * sigma);
            worst = std::max(worst, std::abs(score.data[i] - analytic));
        }
    }
    return {"tweedie-consistency", worst <= 1e-10, "max |score - analytic| " + fmt(worst)};
}

CheckResult check_gradients() {
    NetConfig cfg;
    cfg.in_channels = 10;
    cfg.out_channels = 4;
    cfg.base_channels = 4;
    cfg.multipliers = {2};
    cfg.n_res = 2;
    cfg.d_sigma = 16;
    UNet net(cfg);
    Parameters params = net.init_params(7);
    // randomize the zero-initialized tensors so every path carries gradient
    Rng prng(11);
    for (auto& t : params.tensors)
        if (t.name == "conv_out.weight" || t.name.ends_with(".film.weight"))
            for (auto& v : t.value) v = 0.1 * prng.normal();

    const int h = 8, w = 8;
    Rng rng(99);
    Tensor x = Tensor::randn(cfg.in_channels, h, w, rng);
    Tensor target = Tensor::randn(cfg.out_channels, h, w, rng);
    const double sigma = 0.5;
    const size_t numel = target.size();

    auto loss_of = [&](const Parameters& p) {
        const Tensor f = net.forward(p, x, sigma);
        double acc = 0.0;
        for (size_t i = 0; i < numel; ++i) {
            const double dv = f.v[i] - target.v[i];
            acc += dv * dv;
        }
        return acc / static_cast<double>(numel);
    };

    // analytic gradients
    Workspace ws;
    const Tensor f = net.forward(params, x, sigma, &ws);
    Tensor upstream(cfg.out_channels, h, w);
    for (size_t i = 0; i < numel; ++i)
        upstream.v[i] = 2.0 * (f.v[i] - target.v[i]) / static_cast<double>(numel);
    params.zero_grads();
    net.backward(params, ws, upstream);

    // sample 200 trainable entries
    struct Pick {
        size_t tensor, index;
    };
    std::vector<Pick> picks;
    Rng pick_rng(5);
    size_t trainable_total = 0;
    for (const auto& t : params.tensors)
        if (t.trainable) trainable_total += t.size();
    for (int i = 0; i < 200; ++i) {
        size_t flat = pick_rng.uniform_index(trainable_total);
        for (size_t ti = 0; ti < params.tensors.size(); ++ti) {
            if (!params.tensors[ti].trainable) continue;
            if (flat < params.tensors[ti].size()) {
                picks.push_back({ti, flat});
                break;
            }
            flat -= params.tensors[ti].size();
        }
    }

    const double hstep = 1e-3;
    double worst = 0.0;
    for (const auto& pk : picks) {
        Parameters probe = params;
        const double orig = probe.tensors[pk.tensor].value[pk.index];
        probe.tensors[pk.tensor].value[pk.index] = orig + hstep;
        const double lp = loss_of(probe);
        probe.tensors[pk.tensor].value[pk.index] = orig - hstep;
        const double lm = loss_of(probe);
        const double fd = (lp - lm) / (2.0 * hstep);
        const double an = params.tensors[pk.tensor].grad[pk.index];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        worst = std::max(worst, std::abs(fd - an) / denom);
    }
    return {"gradient-check", worst < 1e-4,
            "max relative error " + fmt(worst) + " over 200 parameters"};
}

CheckResult check_gaussian_transport() {
    // Fixture: the integrator must be well resolved at N = 64, so the noise
    // floor sits at sigma_min = 2.5 with unit conditional spread.
    const int hgrid = 16, wgrid = 16;
    const Grid g(0, 0, 1, 1, hgrid, wgrid);
    GaussianTaskSpec task;
    task.gain_a = 1.0;
    task.offset_b = 0.15;
    task.noise_std = 1.0;
    const SigmaSchedule sched = edm_schedule(64, 2.5, 50.0, 7.0);
    const int n_samples = 4096;

    Field cond(g, {{"t2m", "K"}});
    {
        Rng rng(31);
        // smooth conditioning with |m| <= ~0.3
        for (int r = 0; r < hgrid; ++r)
            for (int c = 0; c < wgrid; ++c)
                cond.at(r, c, 0) = 0.15 * std::sin(6.283185307179586 * (r + 2.0 * c) / 16.0) +
                                   0.05 * rng.normal();
    }
    const DenoiserFn denoiser = make_oracle_denoiser(task, cond);

    const size_t npix = cond.data.size();
    std::vector<double> sum(npix, 0.0), sumsq(npix, 0.0);
    std::vector<Field> samples(n_samples);
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < n_samples; ++k)
        samples[k] = sample(denoiser, cond, sched, child_seed(987654321, k));
    for (int k = 0; k < n_samples; ++k)
        for (size_t i = 0; i < npix; ++i) {
            sum[i] += samples[k].data[i];
            sumsq[i] += samples[k].data[i] * samples[k].data[i];
        }

    const double var_target = task.noise_std * task.noise_std + sched.sigma_min * sched.sigma_min;
    int pass_count = 0;
    for (size_t i = 0; i < npix; ++i) {
        const double mean = sum[i] / n_samples;
        const double var = (sumsq[i] - sum[i] * sum[i] / n_samples) / (n_samples - 1);
        const double se = std::sqrt(var / n_samples);
        const double m = task.gain_a * cond.data[i] + task.offset_b;
        const bool mean_ok = std::abs(mean - m) <= 3.0 * se;
        const bool var_ok = std::abs(var / var_target - 1.0) <= 0.05;
        if (mean_ok && var_ok) ++pass_count;
    }
    const double frac = static_cast<double>(pass_count) / static_cast<double>(npix);
    return {"gaussian-transport", frac >= 0.95,
            std::to_string(pass_count) + "/" + std::to_string(npix) + " pixels pass"};
}

CheckResult check_euler_convergence() {
    const double s = 1.0, x0 = 3.0;
    const double smax = 80.0, smin = 0.002;
    const ScalarDenoiserFn den = [s](double x, double sigma) {
        return s * s * x / (s * s + sigma * sigma);
    };
    const double exact = x0 * std::sqrt((smin * smin + s * s) / (smax * smax + s * s));
    std::vector<double> errs;
    for (int n : {16, 32, 64, 128}) {
        const SigmaSchedule sched = edm_schedule(n, smin, smax, 7.0);
        double x = x0;
        for (int i = 0; i + 1 < n; ++i)
            x = pf_ode_step(x, sched.levels[i], sched.levels[i + 1], den);
        errs.push_back(std::abs(x - exact));
    }
    bool pass = true;
    std::string detail = "ratios";
    for (size_t i = 0; i + 1 < errs.size(); ++i) {
        const double ratio = errs[i] / errs[i + 1];
        detail += " " + fmt(ratio);
        if (ratio < 1.7 || ratio > 2.3) pass = false;
    }
    return {"euler-convergence", pass, detail};
}

CheckResult check_spectral_filter() {
    Rng rng(555);
    const int h = 16, w = 16;
    const Grid g(0, 0, 1, 1, h, w);
    Field f(g, {{"t2m", "K"}});
    for (auto& v : f.data) v = rng.normal();

    // bypass
    const Field same = smooth(f, SmoothingStrength(0.0));
    bool bypass_ok = same.data == f.data;

    // round trip
    std::vector<double> plane(f.data);
    const std::vector<double> back = idft2(dft2(plane, h, w));
    double rt = 0.0;
    for (size_t i = 0; i < plane.size(); ++i) rt = std::max(rt, std::abs(back[i] - plane[i]));

    // high-frequency energy monotone in alpha
    const double cutoff = std::min(h, w) / 4.0;
    auto hf_energy = [&](const Field& field) {
        std::vector<double> p(field.data);
        const Spectrum spec = dft2(p, h, w);
        double acc = 0.0;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const double ky = freq_index(r, h), kx = freq_index(c, w);
                if (std::sqrt(kx * kx + ky * ky) > cutoff) acc += std::norm(spec.at(r, c));
            }
        return acc;
    };
    bool monotone = true;
    double prev = hf_energy(f);
    for (double alpha : {0.2, 0.4, 0.6, 0.8}) {
        const double e = hf_energy(smooth(f, SmoothingStrength(alpha)));
        if (e > prev * (1.0 + 1e-12)) monotone = false;
        prev = e;
    }

    const bool pass = bypass_ok && rt <= 1e-9 && monotone;
    return {"spectral-filter", pass,
            std::string(bypass_ok ? "bypass exact" : "bypass NOT exact") + ", round trip " +
                fmt(rt) + (monotone ? ", energy monotone" : ", energy NOT monotone")};
}

std::vector<std::string> oracle_check_names() {
    return {"coefficient-identities", "schedule-endpoints", "crps-quadrature",
            "tweedie-consistency",    "gradient-check",     "euler-convergence",
            "spectral-filter",        "gaussian-transport"};
}

std::vector<CheckResult> run_oracle_checks(double perturb_coeff) {
    std::vector<CheckResult> results;
    results.push_back(check_coeff_identities(perturb_coeff));
    results.push_back(check_schedule_endpoints());
    results.push_back(check_crps_quadrature());
    results.push_back(check_tweedie());
    results.push_back(check_gradients());
    results.push_back(check_euler_convergence());
    results.push_back(check_spectral_filter());
    results.push_back(check_gaussian_transport());
    return results;
}

}  // namespace downscale::checks
