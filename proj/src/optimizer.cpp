#include "downscale/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace downscale {

void OptimizerState::init(const Parameters& params) {
    m.resize(params.tensors.size());
    v.resize(params.tensors.size());
    for (size_t i = 0; i < params.tensors.size(); ++i) {
        m[i].assign(params.tensors[i].size(), 0.0);
        v[i].assign(params.tensors[i].size(), 0.0);
    }
    step = 0;
}

double cosine_lr(const OptimizerConfig& cfg, long long step, long long total_steps) {
    if (total_steps <= 1) return cfg.lr_max;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    const double pi = 3.14159265358979323846;
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(pi * t));
}

void adamw_step(Parameters& params, OptimizerState& state, long long total_steps) {
    if (!state.initialized()) state.init(params);
    if (state.step >= total_steps)
        throw std::logic_error("adamw_step: step count exceeds schedule length");
    if (!params.grads_finite())
        throw std::runtime_error("adamw_step: non-finite gradient at step " +
                                 std::to_string(state.step));

    const auto& c = state.cfg;
    const double lr = cosine_lr(c, state.step, total_steps);
    const long long t = state.step + 1;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));

    for (size_t i = 0; i < params.tensors.size(); ++i) {
        auto& p = params.tensors[i];
        if (!p.trainable) continue;
        auto& mi = state.m[i];
        auto& vi = state.v[i];
        for (size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad[j];
            mi[j] = c.beta1 * mi[j] + (1.0 - c.beta1) * g;
            vi[j] = c.beta2 * vi[j] + (1.0 - c.beta2) * g * g;
            const double mhat = mi[j] / bc1;
            const double vhat = vi[j] / bc2;
            p.value[j] -= lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * p.value[j]);
        }
    }
    ++state.step;
}

}  // namespace downscale
