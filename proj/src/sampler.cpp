#include "downscale/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace downscale {

SigmaSchedule edm_schedule(int n, double sigma_min, double sigma_max, double rho) {
    if (n < 2) throw std::invalid_argument("edm_schedule: need at least 2 levels");
    if (!(sigma_min > 0.0) || !(sigma_min < sigma_max))
        throw std::invalid_argument("edm_schedule: need 0 < sigma_min < sigma_max");
    if (!(rho > 0.0)) throw std::invalid_argument("edm_schedule: rho must be positive");
    SigmaSchedule s;
    s.n = n;
    s.sigma_min = sigma_min;
    s.sigma_max = sigma_max;
    s.rho = rho;
    s.levels.resize(n);
    const double a = std::pow(sigma_max, 1.0 / rho);
    const double b = std::pow(sigma_min, 1.0 / rho);
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n - 1);
        s.levels[i] = std::pow(a + t * (b - a), rho);
    }
    // pin the endpoints; the formula reproduces them only to the last ulp
    s.levels.front() = sigma_max;
    s.levels.back() = sigma_min;
    for (int i = 0; i + 1 < n; ++i)
        if (!(s.levels[i] > s.levels[i + 1]))
            throw std::logic_error("edm_schedule: schedule is not strictly decreasing");
    return s;
}

Field pf_ode_step(const Field& x, double sigma_hi, double sigma_lo, const DenoiserFn& denoiser) {
    if (!(sigma_hi > sigma_lo) || !(sigma_lo > 0.0))
        throw std::invalid_argument("pf_ode_step: need sigma_hi > sigma_lo > 0");
    const Field d = denoiser(x, sigma_hi);
    const double h = (sigma_lo - sigma_hi) / sigma_hi;
    Field out = x;
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = x.data[i] + h * (x.data[i] - d.data[i]);
        if (!std::isfinite(out.data[i]))
            throw std::runtime_error("pf_ode_step: non-finite state");
    }
    return out;
}

double pf_ode_step(double x, double sigma_hi, double sigma_lo, const ScalarDenoiserFn& denoiser) {
    if (!(sigma_hi > sigma_lo) || !(sigma_lo > 0.0))
        throw std::invalid_argument("pf_ode_step: need sigma_hi > sigma_lo > 0");
    return x + (sigma_lo - sigma_hi) * (x - denoiser(x, sigma_hi)) / sigma_hi;
}

namespace {

Field initial_noise(const Field& proto, double sigma_max, uint64_t seed) {
    Field x(proto.grid, proto.channels);
    Rng rng(seed);
    for (auto& v : x.data) v = sigma_max * rng.normal();
    return x;
}

}  // namespace

Field sample(const DenoiserFn& denoiser, const Field& proto, const SigmaSchedule& schedule,
             uint64_t seed) {
    Field x = initial_noise(proto, schedule.sigma_max, seed);
    for (int i = 0; i + 1 < schedule.n; ++i) {
        try {
            x = pf_ode_step(x, schedule.levels[i], schedule.levels[i + 1], denoiser);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(std::string(e.what()) + " (schedule step " +
                                     std::to_string(i) + ")");
        }
    }
    return x;
}

Field sde_sample(const DenoiserFn& denoiser, const Field& proto, const SigmaSchedule& schedule,
                 uint64_t seed) {
    Rng rng(seed);
    Field x(proto.grid, proto.channels);
    for (auto& v : x.data) v = schedule.sigma_max * rng.normal();
    for (int i = 0; i + 1 < schedule.n; ++i) {
        const double s_hi = schedule.levels[i];
        const double s_lo = schedule.levels[i + 1];
        const double dsig = s_hi - s_lo;
        const Field d = denoiser(x, s_hi);
        const double noise_std = std::sqrt(2.0 * s_hi * dsig);
        for (size_t j = 0; j < x.data.size(); ++j) {
            const double score = (d.data[j] - x.data[j]) / (s_hi * s_hi);
            x.data[j] += 2.0 * s_hi * score * dsig + noise_std * rng.normal();
            if (!std::isfinite(x.data[j]))
                throw std::runtime_error("sde_sample: non-finite state (schedule step " +
                                         std::to_string(i) + ")");
        }
    }
    return x;
}

Ensemble sample_ensemble(const DenoiserFn& denoiser, const Field& proto,
                         const SigmaSchedule& schedule, int n, uint64_t base_seed, bool use_sde) {
    if (n < 1) throw std::invalid_argument("sample_ensemble: need n >= 1");
    Ensemble ens;
    ens.base_seed = base_seed;
    ens.member_seeds.resize(n);
    ens.members.resize(n);
    for (int k = 0; k < n; ++k) ens.member_seeds[k] = child_seed(base_seed, static_cast<uint64_t>(k));

    std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < n; ++k) {
        try {
            ens.members[k] = use_sde ? sde_sample(denoiser, proto, schedule, ens.member_seeds[k])
                                     : sample(denoiser, proto, schedule, ens.member_seeds[k]);
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    }
    for (int k = 0; k < n; ++k)
        if (!errors[k].empty())
            throw std::runtime_error("sample_ensemble: member " + std::to_string(k) + ": " +
                                     errors[k]);
    return ens;
}

Field oracle_denoiser(const GaussianTaskSpec& task, const Field& u_noisy, const Field& cond,
                      double sigma) {
    if (!(u_noisy.grid == cond.grid))
        throw std::invalid_argument("oracle_denoiser: state and conditioning grids differ");
    const double s2 = task.noise_std * task.noise_std;
    const double shrink = s2 / (s2 + sigma * sigma);
    Field out = u_noisy;
    for (size_t i = 0; i < out.data.size(); ++i) {
        const double m = task.gain_a * cond.data[i] + task.offset_b;
        out.data[i] = m + shrink * (u_noisy.data[i] - m);
    }
    return out;
}

DenoiserFn make_oracle_denoiser(const GaussianTaskSpec& task, Field cond_on_fine_grid) {
    return [task, cond = std::move(cond_on_fine_grid)](const Field& x, double sigma) {
        return oracle_denoiser(task, x, cond, sigma);
    };
}

}  // namespace downscale
