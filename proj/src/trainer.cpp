#include "downscale/trainer.hpp"

#include "downscale/edf_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "downscale/spectral.hpp"

namespace downscale {

Tensor field_to_tensor(const Field& f) {
    Tensor t(f.n_channels(), f.grid.h, f.grid.w);
    for (int ch = 0; ch < t.c; ++ch)
        for (int y = 0; y < t.h; ++y)
            for (int x = 0; x < t.w; ++x) t.at(ch, y, x) = f.at(y, x, ch);
    return t;
}

Field tensor_to_field(const Tensor& t, const Grid& grid, const std::vector<Channel>& channels) {
    if (static_cast<int>(channels.size()) != t.c || grid.h != t.h || grid.w != t.w)
        throw std::invalid_argument("tensor_to_field: layout mismatch");
    Field f(grid, channels);
    for (int ch = 0; ch < t.c; ++ch)
        for (int y = 0; y < t.h; ++y)
            for (int x = 0; x < t.w; ++x) f.at(y, x, ch) = t.at(ch, y, x);
    return f;
}

Field build_conditioning(const Field& coarse_std, const Field& statics, const Grid& fine_grid,
                         double alpha) {
    const Field smoothed = smooth(coarse_std, SmoothingStrength(alpha));
    const Field up = upsample_bilinear(smoothed, fine_grid);
    return concat_fields(up, statics);
}

RawNetFn make_raw_net(const UNet& net, const Parameters& params) {
    return [&net, &params](const Field& x, double sigma) {
        const Tensor out = net.forward(params, field_to_tensor(x), sigma);
        std::vector<Channel> out_channels(x.channels.begin(),
                                          x.channels.begin() + net.config().out_channels);
        return tensor_to_field(out, x.grid, out_channels);
    };
}

DenoiserFn make_net_denoiser(const UNet& net, const Parameters& params, Field cond,
                             const EdmConfig& edm) {
    RawNetFn raw = make_raw_net(net, params);
    return [raw, cond = std::move(cond), edm](const Field& x, double sigma) {
        return denoise(raw, x, cond, sigma, edm);
    };
}

Field regression_predict(const UNet& net, const Parameters& params, const Field& cond,
                         const EdmConfig& edm) {
    Field zeros(cond.grid, surface_channels());
    const Field x = concat_fields(zeros, cond);
    return make_raw_net(net, params)(x, edm.sigma_data);
}

TrainResult train(const UNet& net, const Dataset& ds, const EdmConfig& edm,
                  const TrainConfig& cfg) {
    if (cfg.steps < 1) throw std::invalid_argument("train: steps must be >= 1");
    const auto& man = ds.manifest;
    if (man.train_count < 1) throw std::invalid_argument("train: dataset has no train split");

    // standardize once; statics pass through unchanged
    std::vector<Field> coarse_std, fine_std;
    coarse_std.reserve(man.train_count);
    fine_std.reserve(man.train_count);
    for (int i = 0; i < man.train_count; ++i) {
        coarse_std.push_back(standardize(ds.coarse[i], man.stats));
        fine_std.push_back(standardize(ds.fine[i], man.stats));
    }
    const Grid& fine_grid = man.fine_grid;
    const int out_ch = net.config().out_channels;
    const size_t numel = static_cast<size_t>(out_ch) * fine_grid.h * fine_grid.w;

    TrainResult result;
    result.params = net.init_params(child_seed(cfg.seed, 0));
    OptimizerState opt;
    opt.cfg = cfg.opt;
    opt.init(result.params);

    Rng rng(child_seed(cfg.seed, 1));
    Workspace ws;
    std::vector<Tensor> fine_t(man.train_count);
    for (int i = 0; i < man.train_count; ++i) fine_t[i] = field_to_tensor(fine_std[i]);
    const Tensor statics_t = field_to_tensor(ds.statics);

    result.trace.reserve(cfg.steps);
    for (long long step = 0; step < cfg.steps; ++step) {
        const int idx = cfg.overfit_one
                            ? 0
                            : static_cast<int>(rng.uniform_index(
                                  static_cast<uint64_t>(man.train_count)));
        const double alpha = cfg.augment ? sample_alpha(rng).alpha : 0.0;
        const Field cond =
            build_conditioning(coarse_std[idx], ds.statics, fine_grid, alpha);
        const Tensor cond_t = field_to_tensor(cond);
        const Tensor& u = fine_t[idx];

        double sigma, w, loss;
        Tensor residual;  // F - target
        if (cfg.regression) {
            sigma = edm.sigma_data;
            Tensor x(net.config().in_channels, u.h, u.w);
            std::copy(cond_t.v.begin(), cond_t.v.end(),
                      x.v.begin() + static_cast<size_t>(out_ch) * u.h * u.w);
            const Tensor pred = net.forward(result.params, x, sigma, &ws);
            residual = pred;
            loss = 0.0;
            for (size_t i = 0; i < numel; ++i) {
                residual.v[i] -= u.v[i];
                loss += residual.v[i] * residual.v[i];
            }
            loss /= static_cast<double>(numel);
            w = 1.0;
        } else {
            // Objective: the lambda(sigma)-weighted denoising loss
            // w(sigma) * mean((D - u)^2), evaluated in network space where it
            // reduces to mean((F - F_target)^2) via w c_out^2 = 1. The
            // reduction keeps per-step gradients bounded across the sigma
            // range, which batch-1 training needs.
            sigma = cfg.fixed_sigma > 0.0 ? cfg.fixed_sigma : sample_train_sigma(rng, edm);
            const PrecondCoeffs pc = precond_coeffs(sigma, edm);
            w = 1.0;
            Tensor x(net.config().in_channels, u.h, u.w);
            Tensor target(out_ch, u.h, u.w);
            for (size_t i = 0; i < numel; ++i) {
                const double noisy = u.v[i] + sigma * rng.normal();
                x.v[i] = pc.c_in * noisy;
                target.v[i] = (u.v[i] - pc.c_skip * noisy) / pc.c_out;
            }
            std::copy(cond_t.v.begin(), cond_t.v.end(), x.v.begin() + numel);
            const Tensor f = net.forward(result.params, x, sigma, &ws);
            residual = f;
            loss = 0.0;
            for (size_t i = 0; i < numel; ++i) {
                residual.v[i] -= target.v[i];
                loss += residual.v[i] * residual.v[i];
            }
            loss = loss / static_cast<double>(numel);
        }

        if (!std::isfinite(loss)) throw TrainAbortError("train: non-finite loss", step);

        Tensor upstream = residual;
        const double scale = 2.0 * w / static_cast<double>(numel);
        for (auto& v : upstream.v) v *= scale;
        result.params.zero_grads();
        net.backward(result.params, ws, upstream);
        try {
            adamw_step(result.params, opt, cfg.steps);
        } catch (const std::runtime_error& e) {
            throw TrainAbortError(e.what(), step);
        }
        result.trace.push_back(
            {step, sigma, alpha, loss, cosine_lr(cfg.opt, step, cfg.steps)});
    }
    return result;
}

std::string trace_to_csv(const std::vector<TraceRow>& trace) {
    std::string out = "step,sigma,alpha,loss,lr\n";
    char buf[160];
    for (const auto& r : trace) {
        std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g\n", r.step, r.sigma,
                      r.alpha, r.loss, r.lr);
        out += buf;
    }
    return out;
}

void write_trace(const std::string& path, const std::vector<TraceRow>& trace) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot open for write: " + path);
    const std::string text = trace_to_csv(trace);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace downscale
