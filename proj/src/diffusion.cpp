#include "downscale/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace downscale {

namespace {

void require_positive_sigma(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw std::invalid_argument("noise level sigma must be positive and finite");
}

void require_same_layout(const Field& a, const Field& b, const char* what) {
    if (!(a.grid == b.grid) || a.channels != b.channels)
        throw std::invalid_argument(std::string(what) + ": grid or channel mismatch");
}

}  // namespace

PrecondCoeffs precond_coeffs(double sigma, const EdmConfig& cfg) {
    require_positive_sigma(sigma);
    const double sd2 = cfg.sigma_data * cfg.sigma_data;
    const double denom = sigma * sigma + sd2;
    PrecondCoeffs c;
    c.c_skip = sd2 / denom;
    c.c_out = sigma * cfg.sigma_data / std::sqrt(denom);
    c.c_in = 1.0 / std::sqrt(denom);
    c.c_noise = 0.25 * std::log(sigma);
    return c;
}

double loss_weight(double sigma, const EdmConfig& cfg) {
    require_positive_sigma(sigma);
    const double sd2 = cfg.sigma_data * cfg.sigma_data;
    const double prod = sigma * cfg.sigma_data;
    return (sigma * sigma + sd2) / (prod * prod);
}

double sample_train_sigma(Rng& rng, const EdmConfig& cfg) {
    double sigma = std::exp(cfg.p_mean + cfg.p_std * rng.normal());
    if (sigma < cfg.sigma_lo) sigma = cfg.sigma_lo;
    if (sigma > cfg.sigma_hi) sigma = cfg.sigma_hi;
    return sigma;
}

Field concat_fields(const Field& a, const Field& b) {
    if (!(a.grid == b.grid)) throw std::invalid_argument("concat_fields: grid mismatch");
    std::vector<Channel> channels = a.channels;
    channels.insert(channels.end(), b.channels.begin(), b.channels.end());
    Field out(a.grid, channels);
    const int ca = a.n_channels(), cb = b.n_channels();
    for (int r = 0; r < a.grid.h; ++r)
        for (int c = 0; c < a.grid.w; ++c) {
            for (int ch = 0; ch < ca; ++ch) out.at(r, c, ch) = a.at(r, c, ch);
            for (int ch = 0; ch < cb; ++ch) out.at(r, c, ca + ch) = b.at(r, c, ch);
        }
    return out;
}

Field scaled(const Field& f, double s) {
    Field out = f;
    for (auto& v : out.data) v *= s;
    return out;
}

Field add_scaled(const Field& a, const Field& b, double s) {
    require_same_layout(a, b, "add_scaled");
    Field out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += s * b.data[i];
    return out;
}

Field denoise(const RawNetFn& raw_net, const Field& u_noisy, const Field& cond,
              double sigma, const EdmConfig& cfg) {
    if (!(u_noisy.grid == cond.grid))
        throw std::invalid_argument("denoise: noisy state and conditioning grids differ");
    const PrecondCoeffs c = precond_coeffs(sigma, cfg);
    const Field x = concat_fields(scaled(u_noisy, c.c_in), cond);
    const Field f = raw_net(x, sigma);
    require_same_layout(f, u_noisy, "denoise: raw net output");
    return add_scaled(scaled(u_noisy, c.c_skip), f, c.c_out);
}

Field f_target(const Field& u, const Field& u_noisy, double sigma, const EdmConfig& cfg) {
    require_same_layout(u, u_noisy, "f_target");
    const PrecondCoeffs c = precond_coeffs(sigma, cfg);
    Field out = u;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (u.data[i] - c.c_skip * u_noisy.data[i]) / c.c_out;
    return out;
}

Field score_from_denoiser(const Field& d_out, const Field& u_noisy, double sigma) {
    require_positive_sigma(sigma);
    require_same_layout(d_out, u_noisy, "score_from_denoiser");
    Field out = d_out;
    const double inv_s2 = 1.0 / (sigma * sigma);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (d_out.data[i] - u_noisy.data[i]) * inv_s2;
    return out;
}

double denoising_loss(const RawNetFn& raw_net, const Field& u, const Field& cond,
                      double sigma, const Field& eta, const EdmConfig& cfg) {
    require_same_layout(u, eta, "denoising_loss");
    const PrecondCoeffs c = precond_coeffs(sigma, cfg);
    const Field u_noisy = add_scaled(u, eta, 1.0);
    const Field target = f_target(u, u_noisy, sigma, cfg);
    const Field x = concat_fields(scaled(u_noisy, c.c_in), cond);
    const Field f = raw_net(x, sigma);
    require_same_layout(f, u, "denoising_loss: raw net output");
    double acc = 0.0;
    for (size_t i = 0; i < f.data.size(); ++i) {
        const double d = f.data[i] - target.data[i];
        acc += d * d;
    }
    return loss_weight(sigma, cfg) * acc / static_cast<double>(f.data.size());
}

}  // namespace downscale
