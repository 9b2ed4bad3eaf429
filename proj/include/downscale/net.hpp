#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "downscale/tensor.hpp"

namespace downscale {

// Architecture knobs for the conditional U-Net denoiser. Defaults are the
// desk-scale configuration; width grows as base_channels * multipliers[i]
// with one 2x downsampling per stage and a single self-attention block at
// the bottleneck.
struct NetConfig {
    int in_channels = 10;
    int out_channels = 4;
    int base_channels = 8;
    std::vector<int> multipliers = {2, 4};
    int n_res = 2;
    int d_sigma = 64;
    int groups = 32;          // clamped per layer to min(groups, channels)
    int attention_heads = 0;  // 0 = bottleneck_channels / 32, at least 1

    int n_stages() const { return static_cast<int>(multipliers.size()); }
    int width(int stage) const {
        return stage == 0 ? base_channels : base_channels * multipliers[stage - 1];
    }
    int bottleneck_width() const { return width(n_stages()); }
    int heads() const {
        if (attention_heads > 0) return attention_heads;
        int h = bottleneck_width() / 32;
        return h < 1 ? 1 : h;
    }
    // Throws std::invalid_argument when any derived layer is inconsistent
    // (odd d_sigma, group divisibility, empty multipliers, ...).
    void validate() const;

    std::string to_json() const;
    static NetConfig from_json(const std::string& text);
    bool operator==(const NetConfig&) const = default;
};

struct ParamTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool trainable = true;

    size_t size() const {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        return n;
    }
};

// Flat named parameter store with one gradient buffer per tensor.
struct Parameters {
    std::vector<ParamTensor> tensors;
    std::unordered_map<std::string, int> by_name;

    int add(const std::string& name, std::vector<int> shape, bool trainable = true);
    ParamTensor& operator[](int i) { return tensors[i]; }
    const ParamTensor& operator[](int i) const { return tensors[i]; }
    ParamTensor& named(const std::string& name);
    const ParamTensor& named(const std::string& name) const;

    size_t total_count() const;
    void zero_grads();
    bool grads_finite() const;
};

// [sin(2*pi*f_j*c), cos(2*pi*f_j*c)] over the stored frequencies; output has
// dimension 2 * freqs.size().
std::vector<double> fourier_embed(double c_noise, const std::vector<double>& freqs);

// Group-normalize (no affine part) then apply per-channel (1 + a) * . + b.
Tensor film_modulate(const Tensor& x, const std::vector<double>& a,
                     const std::vector<double>& b, int groups, double eps = 1e-6);

namespace detail {

struct GnStats {
    std::vector<double> mean, rstd;
};

struct ResCache {
    Tensor x;        // block input
    GnStats gn1;     // over x
    Tensor xhat1;    // gn1 output
    Tensor h1;       // after gn1 affine (silu input)
    Tensor a1;       // conv1 input
    Tensor c1;       // conv1 output = gn2 input
    GnStats gn2;
    Tensor xhat2;    // gn2 output (pre-modulation)
    Tensor h2;       // after FiLM (silu input)
    Tensor a2;       // conv2 input
    std::vector<double> film_gain;  // 1 + a
};

struct AttnCache {
    Tensor x;
    GnStats gn;
    Tensor xhat;
    Tensor y;  // after gn affine; qkv input
    Tensor q, k, v;
    std::vector<double> attn;  // heads * S * S, softmaxed
    Tensor o;                  // attention output, proj input
};

struct EmbCache {
    double c_noise = 0.0;
    std::vector<double> four, t1, a1, t2, emb;
};

struct EncStageCache {
    Tensor down_in;
    std::vector<ResCache> res;
};

struct DecStageCache {
    Tensor up_in;       // pre-bilinear
    Tensor up_sampled;  // post-bilinear, conv input
    Tensor cat;         // concat(conv_up output, skip), res0 input
    std::vector<ResCache> res;
};

}  // namespace detail

// Activation record of one forward pass; owned by the caller so concurrent
// forward passes with shared read-only parameters are safe.
struct Workspace {
    bool recorded = false;
    double sigma = 0.0;
    Tensor x;
    detail::EmbCache emb;
    std::vector<detail::EncStageCache> enc;
    detail::AttnCache attn;
    std::vector<detail::DecStageCache> dec;
    Tensor final_in;  // conv_out input
};

class UNet {
public:
    explicit UNet(NetConfig cfg);

    const NetConfig& config() const { return cfg_; }

    // Fresh parameters: He-style conv init, identity normalizations,
    // zero-initialized modulation heads and final conv (so the raw network
    // output is exactly zero at initialization).
    Parameters init_params(uint64_t seed) const;

    size_t param_count() const;

    // x: [in_channels, H, W] with H, W divisible by 2^n_stages. When ws is
    // given, activations are recorded for a later backward().
    Tensor forward(const Parameters& params, const Tensor& x, double sigma,
                   Workspace* ws = nullptr) const;

    // Accumulates dLoss/dParam into params.*.grad given dLoss/dOutput.
    // Requires the workspace of a matching recorded forward pass.
    void backward(Parameters& params, Workspace& ws, const Tensor& grad_out) const;

private:
    struct ResHandles {
        int gn1_g, gn1_b, conv1_w, conv1_b, film_w, film_b, conv2_w, conv2_b;
        int skip_w = -1;  // 1x1 projection when in/out widths differ
        int cin, cout;
    };
    struct StageHandles {
        int conv_w, conv_b;  // down (encoder) or post-upsample (decoder) conv
        std::vector<ResHandles> res;
    };

    Parameters make_proto();
    ResHandles register_res(Parameters& p, const std::string& prefix, int cin, int cout);

    NetConfig cfg_;
    Parameters proto_;  // shapes only, zero values
    int p_four_, p_fc1w_, p_fc1b_, p_fc2w_, p_fc2b_;
    int p_conv_in_w_, p_conv_in_b_, p_conv_out_w_, p_conv_out_b_;
    int p_attn_gn_g_, p_attn_gn_b_;
    int p_q_w_, p_q_b_, p_k_w_, p_k_b_, p_v_w_, p_v_b_, p_o_w_, p_o_b_;
    std::vector<StageHandles> enc_, dec_;
};

// Checkpoint container "EDP1": magic, embedded config JSON, then named f32
// tensors. Values round to f32 on write.
void save_checkpoint(const std::string& path, const NetConfig& cfg, const Parameters& params);
std::pair<NetConfig, Parameters> load_checkpoint(const std::string& path);

}  // namespace downscale
