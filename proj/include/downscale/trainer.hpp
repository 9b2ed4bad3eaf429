#pragma once

#include "downscale/diffusion.hpp"
#include "downscale/net.hpp"
#include "downscale/optimizer.hpp"
#include "downscale/sampler.hpp"
#include "downscale/synth.hpp"

namespace downscale {

Tensor field_to_tensor(const Field& f);
Field tensor_to_field(const Tensor& t, const Grid& grid, const std::vector<Channel>& channels);

// Conditioning input for one instance: smooth the standardized coarse field
// (alpha = 0 bypasses), bilinearly upsample to the fine grid, and append the
// static channels unchanged.
Field build_conditioning(const Field& coarse_std, const Field& statics, const Grid& fine_grid,
                         double alpha);

// Raw-network closure over a parameter set. The returned callable keeps
// references; net and params must outlive it.
RawNetFn make_raw_net(const UNet& net, const Parameters& params);

// Wrapped conditional denoiser D(x, sigma) in standardized space, with the
// prepared conditioning bound. Safe for concurrent calls.
DenoiserFn make_net_denoiser(const UNet& net, const Parameters& params, Field cond,
                             const EdmConfig& edm);

// Deterministic regression predictor (MSE mode): zero noisy channels, fixed
// embedding level sigma_data; returns the raw network output.
Field regression_predict(const UNet& net, const Parameters& params, const Field& cond,
                         const EdmConfig& edm);

struct TrainConfig {
    long long steps = 2000;
    uint64_t seed = 0;
    bool augment = true;      // randomized spectral smoothing of the conditioning
    bool overfit_one = false;
    double fixed_sigma = 0.0;  // > 0 pins the training noise level
    bool regression = false;   // plain MSE objective instead of denoising
    OptimizerConfig opt;
};

struct TraceRow {
    long long step;
    double sigma, alpha, loss, lr;
};

struct TrainResult {
    Parameters params;
    std::vector<TraceRow> trace;
};

// Aborted run (non-finite loss or gradients); carries the failing step.
class TrainAbortError : public std::runtime_error {
public:
    TrainAbortError(const std::string& what, long long step)
        : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
    long long step() const { return step_; }

private:
    long long step_;
};

// Sequential single-instance training (batch size 1). Deterministic given
// cfg.seed. Draw order per step: pair index, alpha (when augmenting), sigma,
// then the noise field.
TrainResult train(const UNet& net, const Dataset& ds, const EdmConfig& edm,
                  const TrainConfig& cfg);

// CSV trace "step,sigma,alpha,loss,lr".
std::string trace_to_csv(const std::vector<TraceRow>& trace);
void write_trace(const std::string& path, const std::vector<TraceRow>& trace);

}  // namespace downscale
