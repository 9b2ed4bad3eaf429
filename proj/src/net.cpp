#include "downscale/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "downscale/edf_io.hpp"
#include "downscale/kernels.hpp"

namespace downscale {

namespace {

constexpr double kGnEps = 1e-6;
constexpr double kTwoPi = 6.283185307179586476925286766559;

int gn_groups(int groups, int channels) { return groups < channels ? groups : channels; }

void linear_forward(const double* w, const double* b, const double* x,
                    int nin, int nout, double* y) {
    for (int o = 0; o < nout; ++o) {
        double acc = b ? b[o] : 0.0;
        const double* row = w + static_cast<size_t>(o) * nin;
        for (int i = 0; i < nin; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

void linear_backward(const double* w, const double* x, const double* gy,
                     int nin, int nout, double* gx, double* gw, double* gb) {
    if (gx) {
        for (int i = 0; i < nin; ++i) {
            double acc = 0.0;
            for (int o = 0; o < nout; ++o) acc += gy[o] * w[static_cast<size_t>(o) * nin + i];
            gx[i] = acc;
        }
    }
    for (int o = 0; o < nout; ++o) {
        double g = gy[o];
        double* row = gw + static_cast<size_t>(o) * nin;
        for (int i = 0; i < nin; ++i) row[i] += g * x[i];
        if (gb) gb[o] += g;
    }
}

void silu_vec(const std::vector<double>& in, std::vector<double>& out) {
    out.resize(in.size());
    kernels::silu_forward(in.data(), in.size(), out.data());
}

}  // namespace

void NetConfig::validate() const {
    if (in_channels < 1 || out_channels < 1 || base_channels < 1 || n_res < 1)
        throw std::invalid_argument("NetConfig: channel and block counts must be positive");
    if (multipliers.empty()) throw std::invalid_argument("NetConfig: multipliers must be nonempty");
    for (int m : multipliers)
        if (m < 1) throw std::invalid_argument("NetConfig: multipliers must be >= 1");
    if (d_sigma < 2 || d_sigma % 2 != 0)
        throw std::invalid_argument("NetConfig: d_sigma must be even and >= 2");
    if (groups < 1) throw std::invalid_argument("NetConfig: groups must be positive");

    auto check_gn = [this](int c) {
        int g = gn_groups(groups, c);
        if (c % g != 0)
            throw std::invalid_argument("NetConfig: channel count " + std::to_string(c) +
                                        " not divisible by " + std::to_string(g) + " groups");
    };
    const int L = n_stages();
    for (int s = 0; s <= L; ++s) check_gn(width(s));
    for (int s = 0; s < L; ++s) check_gn(2 * width(s));
    if (bottleneck_width() % heads() != 0)
        throw std::invalid_argument("NetConfig: bottleneck width not divisible by head count");
}

std::string NetConfig::to_json() const {
    nlohmann::json j;
    j["in_channels"] = in_channels;
    j["out_channels"] = out_channels;
    j["base_channels"] = base_channels;
    j["multipliers"] = multipliers;
    j["n_res"] = n_res;
    j["d_sigma"] = d_sigma;
    j["groups"] = groups;
    j["attention_heads"] = attention_heads;
    return j.dump();
}

NetConfig NetConfig::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    NetConfig cfg;
    cfg.in_channels = j.at("in_channels").get<int>();
    cfg.out_channels = j.at("out_channels").get<int>();
    cfg.base_channels = j.at("base_channels").get<int>();
    cfg.multipliers = j.at("multipliers").get<std::vector<int>>();
    cfg.n_res = j.at("n_res").get<int>();
    cfg.d_sigma = j.at("d_sigma").get<int>();
    cfg.groups = j.at("groups").get<int>();
    cfg.attention_heads = j.at("attention_heads").get<int>();
    cfg.validate();
    return cfg;
}

int Parameters::add(const std::string& name, std::vector<int> shape, bool trainable) {
    if (by_name.count(name)) throw std::logic_error("Parameters: duplicate tensor " + name);
    ParamTensor t;
    t.name = name;
    t.shape = std::move(shape);
    t.trainable = trainable;
    t.value.assign(t.size(), 0.0);
    t.grad.assign(t.size(), 0.0);
    tensors.push_back(std::move(t));
    by_name[name] = static_cast<int>(tensors.size()) - 1;
    return static_cast<int>(tensors.size()) - 1;
}

ParamTensor& Parameters::named(const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::out_of_range("Parameters: no tensor named " + name);
    return tensors[it->second];
}

const ParamTensor& Parameters::named(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::out_of_range("Parameters: no tensor named " + name);
    return tensors[it->second];
}

size_t Parameters::total_count() const {
    size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

void Parameters::zero_grads() {
    for (auto& t : tensors) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

bool Parameters::grads_finite() const {
    for (const auto& t : tensors)
        for (double g : t.grad)
            if (!std::isfinite(g)) return false;
    return true;
}

std::vector<double> fourier_embed(double c_noise, const std::vector<double>& freqs) {
    const size_t m = freqs.size();
    std::vector<double> out(2 * m);
    for (size_t j = 0; j < m; ++j) {
        const double phase = kTwoPi * freqs[j] * c_noise;
        out[j] = std::sin(phase);
        out[m + j] = std::cos(phase);
    }
    return out;
}

Tensor film_modulate(const Tensor& x, const std::vector<double>& a,
                     const std::vector<double>& b, int groups, double eps) {
    if (static_cast<int>(a.size()) != x.c || static_cast<int>(b.size()) != x.c)
        throw std::invalid_argument("film_modulate: modulation length != channel count");
    const int g = gn_groups(groups, x.c);
    if (x.c % g != 0) throw std::invalid_argument("film_modulate: channels not divisible by groups");
    Tensor norm(x.c, x.h, x.w);
    std::vector<double> mean(g), rstd(g);
    kernels::group_norm_forward(x.v.data(), x.c, x.h, x.w, g, eps, norm.v.data(), mean.data(),
                                rstd.data());
    Tensor out(x.c, x.h, x.w);
    std::vector<double> gain(x.c);
    for (int c = 0; c < x.c; ++c) gain[c] = 1.0 + a[c];
    kernels::scale_shift_forward(norm.v.data(), x.c, x.h, x.w, gain.data(), b.data(), out.v.data());
    return out;
}

UNet::UNet(NetConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    proto_ = make_proto();
}

UNet::ResHandles UNet::register_res(Parameters& p, const std::string& prefix, int cin, int cout) {
    ResHandles h;
    h.cin = cin;
    h.cout = cout;
    h.gn1_g = p.add(prefix + ".gn1.gain", {cin});
    h.gn1_b = p.add(prefix + ".gn1.bias", {cin});
    h.conv1_w = p.add(prefix + ".conv1.weight", {cout, cin, 3, 3});
    h.conv1_b = p.add(prefix + ".conv1.bias", {cout});
    h.film_w = p.add(prefix + ".film.weight", {2 * cout, cfg_.d_sigma});
    h.film_b = p.add(prefix + ".film.bias", {2 * cout});
    h.conv2_w = p.add(prefix + ".conv2.weight", {cout, cout, 3, 3});
    h.conv2_b = p.add(prefix + ".conv2.bias", {cout});
    if (cin != cout) h.skip_w = p.add(prefix + ".skip.weight", {cout, cin, 1, 1});
    return h;
}

Parameters UNet::make_proto() {
    // non-const side effect free builder; fills handle members
    Parameters p;
    const int d = cfg_.d_sigma;
    const int L = cfg_.n_stages();

    p_four_ = p.add("embed.freq", {d / 2}, /*trainable=*/false);
    p_fc1w_ = p.add("embed.fc1.weight", {d, d});
    p_fc1b_ = p.add("embed.fc1.bias", {d});
    p_fc2w_ = p.add("embed.fc2.weight", {d, d});
    p_fc2b_ = p.add("embed.fc2.bias", {d});

    p_conv_in_w_ = p.add("conv_in.weight", {cfg_.width(0), cfg_.in_channels, 3, 3});
    p_conv_in_b_ = p.add("conv_in.bias", {cfg_.width(0)});

    enc_.clear();
    for (int s = 1; s <= L; ++s) {
        StageHandles st;
        const std::string base = "enc" + std::to_string(s);
        st.conv_w = p.add(base + ".down.weight", {cfg_.width(s), cfg_.width(s - 1), 3, 3});
        st.conv_b = p.add(base + ".down.bias", {cfg_.width(s)});
        for (int r = 0; r < cfg_.n_res; ++r)
            st.res.push_back(
                register_res(p, base + ".res" + std::to_string(r), cfg_.width(s), cfg_.width(s)));
        enc_.push_back(std::move(st));
    }

    const int cb = cfg_.bottleneck_width();
    p_attn_gn_g_ = p.add("attn.gn.gain", {cb});
    p_attn_gn_b_ = p.add("attn.gn.bias", {cb});
    p_q_w_ = p.add("attn.q.weight", {cb, cb, 1, 1});
    p_q_b_ = p.add("attn.q.bias", {cb});
    p_k_w_ = p.add("attn.k.weight", {cb, cb, 1, 1});
    p_k_b_ = p.add("attn.k.bias", {cb});
    p_v_w_ = p.add("attn.v.weight", {cb, cb, 1, 1});
    p_v_b_ = p.add("attn.v.bias", {cb});
    p_o_w_ = p.add("attn.proj.weight", {cb, cb, 1, 1});
    p_o_b_ = p.add("attn.proj.bias", {cb});

    dec_.clear();
    for (int s = L; s >= 1; --s) {
        StageHandles st;
        const std::string base = "dec" + std::to_string(s);
        st.conv_w = p.add(base + ".up.weight", {cfg_.width(s - 1), cfg_.width(s), 3, 3});
        st.conv_b = p.add(base + ".up.bias", {cfg_.width(s - 1)});
        for (int r = 0; r < cfg_.n_res; ++r) {
            const int cin = r == 0 ? 2 * cfg_.width(s - 1) : cfg_.width(s - 1);
            st.res.push_back(
                register_res(p, base + ".res" + std::to_string(r), cin, cfg_.width(s - 1)));
        }
        dec_.push_back(std::move(st));
    }

    p_conv_out_w_ = p.add("conv_out.weight", {cfg_.out_channels, cfg_.width(0), 3, 3});
    p_conv_out_b_ = p.add("conv_out.bias", {cfg_.out_channels});
    return p;
}

Parameters UNet::init_params(uint64_t seed) const {
    Parameters p = proto_;
    Rng rng(seed);
    for (auto& t : p.tensors) {
        const bool is_bias = t.name.ends_with(".bias");
        const bool is_gain = t.name.ends_with(".gain");
        const bool is_freq = t.name == "embed.freq";
        const bool is_zero_weight =
            t.name == "conv_out.weight" || t.name.ends_with(".film.weight");
        if (is_gain) {
            std::fill(t.value.begin(), t.value.end(), 1.0);
        } else if (is_bias || is_zero_weight) {
            // already zero
        } else if (is_freq) {
            for (auto& v : t.value) v = rng.normal();
        } else if (t.shape.size() == 4) {
            const int fan_in = t.shape[1] * t.shape[2] * t.shape[3];
            const double std = std::sqrt(1.0 / fan_in);
            for (auto& v : t.value) v = std * rng.normal();
        } else if (t.shape.size() == 2) {
            const double std = std::sqrt(1.0 / t.shape[1]);
            for (auto& v : t.value) v = std * rng.normal();
        } else {
            throw std::logic_error("init_params: unclassified tensor " + t.name);
        }
    }
    return p;
}

size_t UNet::param_count() const { return proto_.total_count(); }

namespace {

using detail::GnStats;

Tensor conv_t(const Tensor& in, const ParamTensor& w, const ParamTensor* b, int stride) {
    const int k = w.shape[2];
    const int oh = kernels::conv_out_dim(in.h, k, stride);
    const int ow = kernels::conv_out_dim(in.w, k, stride);
    Tensor out(w.shape[0], oh, ow);
    kernels::conv2d_forward(in.v.data(), in.c, in.h, in.w, w.value.data(),
                            b ? b->value.data() : nullptr, w.shape[0], k, stride, out.v.data());
    return out;
}

Tensor gn_t(const Tensor& in, int groups_cfg, GnStats& st) {
    const int g = gn_groups(groups_cfg, in.c);
    st.mean.resize(g);
    st.rstd.resize(g);
    Tensor out(in.c, in.h, in.w);
    kernels::group_norm_forward(in.v.data(), in.c, in.h, in.w, g, kGnEps, out.v.data(),
                                st.mean.data(), st.rstd.data());
    return out;
}

Tensor gn_backward_t(const Tensor& gout, const Tensor& input, int groups_cfg, const GnStats& st) {
    const int g = gn_groups(groups_cfg, input.c);
    Tensor gin(input.c, input.h, input.w);
    kernels::group_norm_backward(gout.v.data(), input.v.data(), input.c, input.h, input.w, g,
                                 st.mean.data(), st.rstd.data(), gin.v.data());
    return gin;
}

Tensor scale_shift_t(const Tensor& in, const std::vector<double>& gain, const double* bias) {
    Tensor out(in.c, in.h, in.w);
    kernels::scale_shift_forward(in.v.data(), in.c, in.h, in.w, gain.data(), bias, out.v.data());
    return out;
}

Tensor silu_t(const Tensor& in) {
    Tensor out(in.c, in.h, in.w);
    kernels::silu_forward(in.v.data(), in.size(), out.v.data());
    return out;
}

Tensor silu_backward_t(const Tensor& gout, const Tensor& in) {
    Tensor gin(in.c, in.h, in.w);
    kernels::silu_backward(gout.v.data(), in.v.data(), in.size(), gin.v.data());
    return gin;
}

}  // namespace

Tensor UNet::forward(const Parameters& params, const Tensor& x, double sigma,
                     Workspace* ws) const {
    if (params.tensors.size() != proto_.tensors.size())
        throw std::invalid_argument("UNet::forward: parameter set does not match this net");
    if (x.c != cfg_.in_channels)
        throw std::invalid_argument("UNet::forward: expected " + std::to_string(cfg_.in_channels) +
                                    " input channels, got " + std::to_string(x.c));
    const int L = cfg_.n_stages();
    const int div = 1 << L;
    if (x.h % div != 0 || x.w % div != 0)
        throw std::invalid_argument("UNet::forward: H and W must be divisible by " +
                                    std::to_string(div));
    if (!(sigma > 0.0)) throw std::invalid_argument("UNet::forward: sigma must be positive");

    Workspace local;
    Workspace& c = ws ? *ws : local;
    c = Workspace{};
    c.sigma = sigma;
    c.x = x;

    // noise embedding
    const int d = cfg_.d_sigma;
    c.emb.c_noise = 0.25 * std::log(sigma);
    c.emb.four = fourier_embed(c.emb.c_noise, params[p_four_].value);
    c.emb.t1.resize(d);
    linear_forward(params[p_fc1w_].value.data(), params[p_fc1b_].value.data(), c.emb.four.data(),
                   d, d, c.emb.t1.data());
    silu_vec(c.emb.t1, c.emb.a1);
    c.emb.t2.resize(d);
    linear_forward(params[p_fc2w_].value.data(), params[p_fc2b_].value.data(), c.emb.a1.data(),
                   d, d, c.emb.t2.data());
    silu_vec(c.emb.t2, c.emb.emb);

    auto run_res = [&](const ResHandles& h, const Tensor& in, detail::ResCache& rc) -> Tensor {
        rc.x = in;
        rc.xhat1 = gn_t(in, cfg_.groups, rc.gn1);
        rc.h1 = scale_shift_t(rc.xhat1, params[h.gn1_g].value, params[h.gn1_b].value.data());
        rc.a1 = silu_t(rc.h1);
        rc.c1 = conv_t(rc.a1, params[h.conv1_w], &params[h.conv1_b], 1);
        rc.xhat2 = gn_t(rc.c1, cfg_.groups, rc.gn2);
        std::vector<double> ab(2 * h.cout);
        linear_forward(params[h.film_w].value.data(), params[h.film_b].value.data(),
                       c.emb.emb.data(), d, 2 * h.cout, ab.data());
        rc.film_gain.resize(h.cout);
        for (int i = 0; i < h.cout; ++i) rc.film_gain[i] = 1.0 + ab[i];
        rc.h2 = scale_shift_t(rc.xhat2, rc.film_gain, ab.data() + h.cout);
        rc.a2 = silu_t(rc.h2);
        Tensor out = conv_t(rc.a2, params[h.conv2_w], &params[h.conv2_b], 1);
        if (h.skip_w >= 0) {
            Tensor sk = conv_t(in, params[h.skip_w], nullptr, 1);
            for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += sk.v[i];
        } else {
            for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += in.v[i];
        }
        return out;
    };

    // encoder
    std::vector<Tensor> enc_feats(L + 1);
    enc_feats[0] = conv_t(x, params[p_conv_in_w_], &params[p_conv_in_b_], 1);
    c.enc.resize(L);
    for (int s = 1; s <= L; ++s) {
        auto& stage = enc_[s - 1];
        auto& sc = c.enc[s - 1];
        sc.down_in = enc_feats[s - 1];
        Tensor cur = conv_t(sc.down_in, params[stage.conv_w], &params[stage.conv_b], 2);
        sc.res.resize(cfg_.n_res);
        for (int r = 0; r < cfg_.n_res; ++r) cur = run_res(stage.res[r], cur, sc.res[r]);
        enc_feats[s] = std::move(cur);
    }

    // bottleneck attention
    {
        auto& ac = c.attn;
        ac.x = enc_feats[L];
        ac.xhat = gn_t(ac.x, cfg_.groups, ac.gn);
        ac.y = scale_shift_t(ac.xhat, params[p_attn_gn_g_].value, params[p_attn_gn_b_].value.data());
        ac.q = conv_t(ac.y, params[p_q_w_], &params[p_q_b_], 1);
        ac.k = conv_t(ac.y, params[p_k_w_], &params[p_k_b_], 1);
        ac.v = conv_t(ac.y, params[p_v_w_], &params[p_v_b_], 1);
        const int heads = cfg_.heads();
        const int cb = cfg_.bottleneck_width();
        const int hd = cb / heads;
        const int S = ac.x.h * ac.x.w;
        const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
        ac.attn.assign(static_cast<size_t>(heads) * S * S, 0.0);
        ac.o = Tensor(cb, ac.x.h, ac.x.w);
#pragma omp parallel for schedule(static)
        for (int head = 0; head < heads; ++head) {
            double* A = ac.attn.data() + static_cast<size_t>(head) * S * S;
            const int c0 = head * hd;
            for (int i = 0; i < S; ++i) {
                double mx = -1e300;
                for (int j = 0; j < S; ++j) {
                    double sc = 0.0;
                    for (int dd = 0; dd < hd; ++dd)
                        sc += ac.q.v[static_cast<size_t>(c0 + dd) * S + i] *
                              ac.k.v[static_cast<size_t>(c0 + dd) * S + j];
                    sc *= scale;
                    A[static_cast<size_t>(i) * S + j] = sc;
                    if (sc > mx) mx = sc;
                }
                double sum = 0.0;
                for (int j = 0; j < S; ++j) {
                    double e = std::exp(A[static_cast<size_t>(i) * S + j] - mx);
                    A[static_cast<size_t>(i) * S + j] = e;
                    sum += e;
                }
                for (int j = 0; j < S; ++j) A[static_cast<size_t>(i) * S + j] /= sum;
            }
            for (int dd = 0; dd < hd; ++dd) {
                const double* vrow = ac.v.v.data() + static_cast<size_t>(c0 + dd) * S;
                double* orow = ac.o.v.data() + static_cast<size_t>(c0 + dd) * S;
                for (int i = 0; i < S; ++i) {
                    double acc = 0.0;
                    const double* Ai = A + static_cast<size_t>(i) * S;
                    for (int j = 0; j < S; ++j) acc += Ai[j] * vrow[j];
                    orow[i] = acc;
                }
            }
        }
        Tensor proj = conv_t(ac.o, params[p_o_w_], &params[p_o_b_], 1);
        for (size_t i = 0; i < proj.v.size(); ++i) proj.v[i] += ac.x.v[i];
        enc_feats[L] = std::move(proj);
    }

    // decoder
    Tensor cur = enc_feats[L];
    c.dec.resize(L);
    for (int j = 0; j < L; ++j) {
        const int s = L - j;
        auto& stage = dec_[j];
        auto& dc = c.dec[j];
        dc.up_in = cur;
        dc.up_sampled = Tensor(cur.c, 2 * cur.h, 2 * cur.w);
        kernels::upsample2x_forward(cur.v.data(), cur.c, cur.h, cur.w, dc.up_sampled.v.data());
        Tensor up = conv_t(dc.up_sampled, params[stage.conv_w], &params[stage.conv_b], 1);
        dc.cat = concat_channels({&up, &enc_feats[s - 1]});
        Tensor t = dc.cat;
        dc.res.resize(cfg_.n_res);
        for (int r = 0; r < cfg_.n_res; ++r) t = run_res(stage.res[r], t, dc.res[r]);
        cur = std::move(t);
    }

    c.final_in = cur;
    Tensor out = conv_t(cur, params[p_conv_out_w_], &params[p_conv_out_b_], 1);
    c.recorded = true;
    return out;
}

void UNet::backward(Parameters& params, Workspace& ws, const Tensor& grad_out) const {
    if (!ws.recorded)
        throw std::logic_error("UNet::backward: workspace holds no recorded forward pass");
    if (grad_out.c != cfg_.out_channels || grad_out.h != ws.x.h || grad_out.w != ws.x.w)
        throw std::invalid_argument("UNet::backward: upstream gradient shape mismatch");
    if (ws.enc.size() != static_cast<size_t>(cfg_.n_stages()) ||
        ws.dec.size() != static_cast<size_t>(cfg_.n_stages()) || ws.x.c != cfg_.in_channels)
        throw std::logic_error("UNet::backward: workspace was recorded by a different net");
    const int L = cfg_.n_stages();
    const int d = cfg_.d_sigma;

    std::vector<double> g_emb(d, 0.0);

    auto conv_bwd = [&](const Tensor& gout, const Tensor& input, int w_idx, int b_idx,
                        int stride) -> Tensor {
        const ParamTensor& w = params[w_idx];
        const int k = w.shape[2];
        Tensor gin(input.c, input.h, input.w);
        kernels::conv2d_backward_data(gout.v.data(), gout.c, gout.h, gout.w, w.value.data(),
                                      input.c, k, stride, input.h, input.w, gin.v.data());
        kernels::conv2d_backward_weights(gout.v.data(), gout.c, gout.h, gout.w, input.v.data(),
                                         input.c, input.h, input.w, k, stride,
                                         params[w_idx].grad.data(),
                                         b_idx >= 0 ? params[b_idx].grad.data() : nullptr);
        return gin;
    };

    auto res_bwd = [&](const ResHandles& h, const detail::ResCache& rc,
                       const Tensor& gout) -> Tensor {
        // conv2
        Tensor g_a2 = conv_bwd(gout, rc.a2, h.conv2_w, h.conv2_b, 1);
        Tensor g_h2 = silu_backward_t(g_a2, rc.h2);
        // FiLM scale-shift: gain = 1 + a
        Tensor g_xhat2(rc.xhat2.c, rc.xhat2.h, rc.xhat2.w);
        std::vector<double> g_ab(2 * h.cout, 0.0);
        kernels::scale_shift_backward(g_h2.v.data(), rc.xhat2.v.data(), rc.xhat2.c, rc.xhat2.h,
                                      rc.xhat2.w, rc.film_gain.data(), g_xhat2.v.data(),
                                      g_ab.data(), g_ab.data() + h.cout);
        {
            std::vector<double> g_emb_local(d);
            linear_backward(params[h.film_w].value.data(), ws.emb.emb.data(), g_ab.data(), d,
                            2 * h.cout, g_emb_local.data(), params[h.film_w].grad.data(),
                            params[h.film_b].grad.data());
            for (int i = 0; i < d; ++i) g_emb[i] += g_emb_local[i];
        }
        Tensor g_c1 = gn_backward_t(g_xhat2, rc.c1, cfg_.groups, rc.gn2);
        // conv1
        Tensor g_a1 = conv_bwd(g_c1, rc.a1, h.conv1_w, h.conv1_b, 1);
        Tensor g_h1 = silu_backward_t(g_a1, rc.h1);
        // gn1 affine
        Tensor g_xhat1(rc.xhat1.c, rc.xhat1.h, rc.xhat1.w);
        kernels::scale_shift_backward(g_h1.v.data(), rc.xhat1.v.data(), rc.xhat1.c, rc.xhat1.h,
                                      rc.xhat1.w, params[h.gn1_g].value.data(), g_xhat1.v.data(),
                                      params[h.gn1_g].grad.data(), params[h.gn1_b].grad.data());
        Tensor g_x = gn_backward_t(g_xhat1, rc.x, cfg_.groups, rc.gn1);
        // shortcut
        if (h.skip_w >= 0) {
            Tensor g_sk = conv_bwd(gout, rc.x, h.skip_w, -1, 1);
            for (size_t i = 0; i < g_x.v.size(); ++i) g_x.v[i] += g_sk.v[i];
        } else {
            for (size_t i = 0; i < g_x.v.size(); ++i) g_x.v[i] += gout.v[i];
        }
        return g_x;
    };

    // final conv
    Tensor g_cur = conv_bwd(grad_out, ws.final_in, p_conv_out_w_, p_conv_out_b_, 1);

    // decoder stages in reverse execution order
    std::vector<Tensor> g_enc_feat(L + 1);
    for (int j = L - 1; j >= 0; --j) {
        const int s = L - j;
        auto& stage = dec_[j];
        auto& dc = ws.dec[j];
        for (int r = cfg_.n_res - 1; r >= 0; --r) g_cur = res_bwd(stage.res[r], dc.res[r], g_cur);
        // split concat grad
        const int w_lo = cfg_.width(s - 1);
        Tensor g_up_out(w_lo, g_cur.h, g_cur.w);
        Tensor g_skip(w_lo, g_cur.h, g_cur.w);
        std::copy(g_cur.v.begin(), g_cur.v.begin() + g_up_out.size(), g_up_out.v.begin());
        std::copy(g_cur.v.begin() + g_up_out.size(), g_cur.v.end(), g_skip.v.begin());
        if (g_enc_feat[s - 1].size() == 0) {
            g_enc_feat[s - 1] = std::move(g_skip);
        } else {
            for (size_t i = 0; i < g_skip.v.size(); ++i) g_enc_feat[s - 1].v[i] += g_skip.v[i];
        }
        Tensor g_upsampled = conv_bwd(g_up_out, dc.up_sampled, stage.conv_w, stage.conv_b, 1);
        Tensor g_up_in(dc.up_in.c, dc.up_in.h, dc.up_in.w);
        kernels::upsample2x_backward(g_upsampled.v.data(), dc.up_in.c, dc.up_in.h, dc.up_in.w,
                                     g_up_in.v.data());
        g_cur = std::move(g_up_in);
    }

    // attention backward; g_cur is the gradient at the attention output
    {
        auto& ac = ws.attn;
        const int heads = cfg_.heads();
        const int cb = cfg_.bottleneck_width();
        const int hd = cb / heads;
        const int S = ac.x.h * ac.x.w;
        const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

        Tensor g_x = g_cur;  // residual path
        Tensor g_o = conv_bwd(g_cur, ac.o, p_o_w_, p_o_b_, 1);

        Tensor g_q(cb, ac.x.h, ac.x.w), g_k(cb, ac.x.h, ac.x.w), g_v(cb, ac.x.h, ac.x.w);
#pragma omp parallel for schedule(static)
        for (int head = 0; head < heads; ++head) {
            const double* A = ac.attn.data() + static_cast<size_t>(head) * S * S;
            const int c0 = head * hd;
            std::vector<double> gA(static_cast<size_t>(S) * S, 0.0);
            for (int i = 0; i < S; ++i)
                for (int j = 0; j < S; ++j) {
                    double acc = 0.0;
                    for (int dd = 0; dd < hd; ++dd)
                        acc += g_o.v[static_cast<size_t>(c0 + dd) * S + i] *
                               ac.v.v[static_cast<size_t>(c0 + dd) * S + j];
                    gA[static_cast<size_t>(i) * S + j] = acc;
                }
            for (int dd = 0; dd < hd; ++dd) {
                double* gvrow = g_v.v.data() + static_cast<size_t>(c0 + dd) * S;
                const double* gorow = g_o.v.data() + static_cast<size_t>(c0 + dd) * S;
                for (int j = 0; j < S; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < S; ++i) acc += A[static_cast<size_t>(i) * S + j] * gorow[i];
                    gvrow[j] = acc;
                }
            }
            // softmax backward, row-wise
            std::vector<double> gS(static_cast<size_t>(S) * S, 0.0);
            for (int i = 0; i < S; ++i) {
                const double* Ai = A + static_cast<size_t>(i) * S;
                const double* gAi = gA.data() + static_cast<size_t>(i) * S;
                double dot = 0.0;
                for (int j = 0; j < S; ++j) dot += Ai[j] * gAi[j];
                double* gSi = gS.data() + static_cast<size_t>(i) * S;
                for (int j = 0; j < S; ++j) gSi[j] = Ai[j] * (gAi[j] - dot);
            }
            for (int dd = 0; dd < hd; ++dd) {
                const double* krow = ac.k.v.data() + static_cast<size_t>(c0 + dd) * S;
                const double* qrow = ac.q.v.data() + static_cast<size_t>(c0 + dd) * S;
                double* gqrow = g_q.v.data() + static_cast<size_t>(c0 + dd) * S;
                double* gkrow = g_k.v.data() + static_cast<size_t>(c0 + dd) * S;
                for (int i = 0; i < S; ++i) {
                    double acc = 0.0;
                    const double* gSi = gS.data() + static_cast<size_t>(i) * S;
                    for (int j = 0; j < S; ++j) acc += gSi[j] * krow[j];
                    gqrow[i] = acc * scale;
                }
                for (int j = 0; j < S; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < S; ++i) acc += gS[static_cast<size_t>(i) * S + j] * qrow[i];
                    gkrow[j] = acc * scale;
                }
            }
        }

        Tensor g_y = conv_bwd(g_q, ac.y, p_q_w_, p_q_b_, 1);
        {
            Tensor t = conv_bwd(g_k, ac.y, p_k_w_, p_k_b_, 1);
            for (size_t i = 0; i < g_y.v.size(); ++i) g_y.v[i] += t.v[i];
            t = conv_bwd(g_v, ac.y, p_v_w_, p_v_b_, 1);
            for (size_t i = 0; i < g_y.v.size(); ++i) g_y.v[i] += t.v[i];
        }
        Tensor g_xhat(cb, ac.x.h, ac.x.w);
        kernels::scale_shift_backward(g_y.v.data(), ac.xhat.v.data(), cb, ac.x.h, ac.x.w,
                                      params[p_attn_gn_g_].value.data(), g_xhat.v.data(),
                                      params[p_attn_gn_g_].grad.data(),
                                      params[p_attn_gn_b_].grad.data());
        Tensor g_gn = gn_backward_t(g_xhat, ac.x, cfg_.groups, ac.gn);
        for (size_t i = 0; i < g_x.v.size(); ++i) g_x.v[i] += g_gn.v[i];
        g_cur = std::move(g_x);
    }

    // encoder stages in reverse
    if (g_enc_feat[L].size() == 0) {
        g_enc_feat[L] = std::move(g_cur);
    } else {
        for (size_t i = 0; i < g_cur.v.size(); ++i) g_enc_feat[L].v[i] += g_cur.v[i];
    }
    for (int s = L; s >= 1; --s) {
        auto& stage = enc_[s - 1];
        auto& sc = ws.enc[s - 1];
        Tensor g = std::move(g_enc_feat[s]);
        for (int r = cfg_.n_res - 1; r >= 0; --r) g = res_bwd(stage.res[r], sc.res[r], g);
        Tensor g_down_in = conv_bwd(g, sc.down_in, stage.conv_w, stage.conv_b, 2);
        if (g_enc_feat[s - 1].size() == 0) {
            g_enc_feat[s - 1] = std::move(g_down_in);
        } else {
            for (size_t i = 0; i < g_down_in.v.size(); ++i)
                g_enc_feat[s - 1].v[i] += g_down_in.v[i];
        }
    }

    // conv_in: weight gradients only, input gradient is not needed
    kernels::conv2d_backward_weights(g_enc_feat[0].v.data(), g_enc_feat[0].c, g_enc_feat[0].h,
                                     g_enc_feat[0].w, ws.x.v.data(), ws.x.c, ws.x.h, ws.x.w, 3, 1,
                                     params[p_conv_in_w_].grad.data(),
                                     params[p_conv_in_b_].grad.data());

    // embedding path
    {
        std::vector<double> g_t2(d), g_a1(d), g_t1(d), g_four(d);
        kernels::silu_backward(g_emb.data(), ws.emb.t2.data(), d, g_t2.data());
        linear_backward(params[p_fc2w_].value.data(), ws.emb.a1.data(), g_t2.data(), d, d,
                        g_a1.data(), params[p_fc2w_].grad.data(), params[p_fc2b_].grad.data());
        std::vector<double> g_t1_tmp(d);
        kernels::silu_backward(g_a1.data(), ws.emb.t1.data(), d, g_t1_tmp.data());
        linear_backward(params[p_fc1w_].value.data(), ws.emb.four.data(), g_t1_tmp.data(), d, d,
                        g_four.data(), params[p_fc1w_].grad.data(), params[p_fc1b_].grad.data());
        // embed.freq is frozen: gradient stops here
    }
}

void save_checkpoint(const std::string& path, const NetConfig& cfg, const Parameters& params) {
    std::string out;
    out.append("EDP1");
    const std::string cfg_json = cfg.to_json();
    auto put_u32 = [&out](uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    };
    put_u32(static_cast<uint32_t>(cfg_json.size()));
    out.append(cfg_json);
    put_u32(static_cast<uint32_t>(params.tensors.size()));
    for (const auto& t : params.tensors) {
        put_u32(static_cast<uint32_t>(t.name.size()));
        out.append(t.name);
        put_u32(static_cast<uint32_t>(t.shape.size()));
        for (int dme : t.shape) put_u32(static_cast<uint32_t>(dme));
        for (double v : t.value) {
            float f = static_cast<float>(v);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(bits);
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot open for write: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw InputError("write failed: " + path);
}

std::pair<NetConfig, Parameters> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    size_t pos = 0;
    auto need = [&](size_t n, const char* what) {
        if (pos + n > bytes.size()) throw FormatError(std::string("truncated ") + what, pos);
    };
    auto get_u32 = [&](const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    };
    need(4, "magic");
    if (bytes.compare(0, 4, "EDP1") != 0) throw FormatError("bad magic, expected EDP1", 0);
    pos = 4;
    const uint32_t cfg_len = get_u32("config length");
    need(cfg_len, "config json");
    NetConfig cfg = NetConfig::from_json(bytes.substr(pos, cfg_len));
    pos += cfg_len;

    UNet net(cfg);
    Parameters params = net.init_params(0);
    const uint32_t n_tensors = get_u32("tensor count");
    if (n_tensors != params.tensors.size())
        throw FormatError("tensor count does not match architecture", pos - 4);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        const uint32_t name_len = get_u32("tensor name length");
        need(name_len, "tensor name");
        const std::string name = bytes.substr(pos, name_len);
        pos += name_len;
        auto& t = params.tensors[i];
        if (t.name != name)
            throw FormatError("unexpected tensor " + name + ", wanted " + t.name, pos - name_len);
        const uint32_t rank = get_u32("tensor rank");
        if (rank != t.shape.size()) throw FormatError("rank mismatch for " + name, pos - 4);
        for (uint32_t r = 0; r < rank; ++r) {
            const uint32_t dim = get_u32("tensor dim");
            if (static_cast<int>(dim) != t.shape[r])
                throw FormatError("shape mismatch for " + name, pos - 4);
        }
        for (size_t j = 0; j < t.size(); ++j) {
            const uint32_t bits = get_u32("tensor data");
            float v;
            std::memcpy(&v, &bits, 4);
            t.value[j] = static_cast<double>(v);
        }
    }
    if (pos != bytes.size()) throw FormatError("trailing bytes after tensors", pos);
    return {cfg, std::move(params)};
}

}  // namespace downscale
