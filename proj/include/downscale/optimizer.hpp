#pragma once

#include "downscale/net.hpp"

namespace downscale {

// AdamW with decoupled weight decay and cosine learning-rate annealing from
// lr_max at step 0 to lr_min at step total_steps - 1.
struct OptimizerConfig {
    double lr_max = 1e-4;
    double lr_min = 1e-5;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    OptimizerConfig cfg;
    long long step = 0;  // completed steps
    std::vector<std::vector<double>> m, v;

    void init(const Parameters& params);
    bool initialized() const { return !m.empty(); }
};

double cosine_lr(const OptimizerConfig& cfg, long long step, long long total_steps);

// One update over every trainable tensor; frozen tensors are left alone.
// Throws std::runtime_error on non-finite gradients.
void adamw_step(Parameters& params, OptimizerState& state, long long total_steps);

}  // namespace downscale
