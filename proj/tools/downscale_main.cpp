#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "downscale/edf_io.hpp"
#include "downscale/pipeline.hpp"
#include "downscale/trainer.hpp"

namespace {

using downscale::pipeline::EvaluateArgs;
using downscale::pipeline::GenDataArgs;
using downscale::pipeline::SampleArgs;
using downscale::pipeline::TrainArgs;

// Exit codes: 0 success, 1 check failure, 2 usage/input error, 3 runtime abort.
constexpr int kOk = 0;
constexpr int kCheckFailure = 1;
constexpr int kUsage = 2;
constexpr int kAbort = 3;

nlohmann::json load_config(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream f(path, std::ios::binary);
    if (!f) throw downscale::InputError("cannot open config " + path);
    return nlohmann::json::parse(std::string((std::istreambuf_iterator<char>(f)),
                                             std::istreambuf_iterator<char>()));
}

// Config file supplies defaults; flags given on the command line win.
template <typename T>
void cfg(const nlohmann::json& j, const char* key, const CLI::Option* opt, T& target) {
    if (opt->count() == 0 && j.contains(key)) target = j.at(key).get<T>();
}

void seed_fallback(const nlohmann::json& j, const CLI::Option* opt, uint64_t& seed) {
    if (opt->count() > 0) return;
    if (j.contains("seed")) {
        seed = j.at("seed").get<uint64_t>();
        return;
    }
    if (const char* env = std::getenv("EDM_SEED")) seed = std::strtoull(env, nullptr, 10);
}

int dispatch(int argc, char** argv) {
    CLI::App app{"conditional diffusion downscaling pipelines"};
    app.require_subcommand(1);

    // gen-data
    GenDataArgs gd;
    std::string gd_config;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic paired dataset");
    gen->add_option("--config", gd_config, "JSON config file");
    auto* gd_task = gen->add_option("--task", gd.task, "gaussian | terrain");
    auto* gd_out = gen->add_option("--out", gd.out_dir, "output directory");
    auto* gd_fine = gen->add_option("--fine", gd.fine, "fine grid size per side");
    auto* gd_factor = gen->add_option("--factor", gd.factor, "coarsening factor");
    auto* gd_count = gen->add_option("--count", gd.count, "total pair count");
    auto* gd_train = gen->add_option("--train-count", gd.train_count, "train split size");
    auto* gd_a = gen->add_option("--gain-a", gd.gain_a, "gaussian task gain");
    auto* gd_b = gen->add_option("--offset-b", gd.offset_b, "gaussian task offset");
    auto* gd_s = gen->add_option("--noise-std", gd.noise_std, "gaussian conditional std");
    auto* gd_rough = gen->add_option("--roughness", gd.roughness, "terrain roughness");
    auto* gd_bias = gen->add_option("--bias-amp", gd.bias_amp, "terrain coarse bias");
    auto* gd_nst = gen->add_option("--stations", gd.n_stations, "station count");
    auto* gd_onoise = gen->add_option("--obs-noise", gd.obs_noise, "observation noise std");
    auto* gd_seed = gen->add_option("--seed", gd.seed, "rng seed");

    // train
    TrainArgs tr;
    std::string tr_config, tr_mult;
    auto* trn = app.add_subcommand("train", "train the denoiser (or MSE regressor)");
    trn->add_option("--config", tr_config, "JSON config file");
    auto* tr_data = trn->add_option("--dataset", tr.dataset_dir, "dataset directory");
    auto* tr_out = trn->add_option("--out", tr.out_dir, "output directory");
    auto* tr_steps = trn->add_option("--steps", tr.steps, "training steps");
    auto* tr_seed = trn->add_option("--seed", tr.seed, "rng seed");
    auto* tr_aug = trn->add_flag("--augment,!--no-augment", tr.augment,
                                 "randomized conditioning smoothing");
    auto* tr_overfit = trn->add_flag("--overfit-one", tr.overfit_one, "train on one pair only");
    auto* tr_fs = trn->add_option("--fixed-sigma", tr.fixed_sigma, "pin the noise level");
    auto* tr_reg = trn->add_flag("--regression", tr.regression, "plain MSE objective");
    auto* tr_lr = trn->add_option("--lr", tr.lr, "peak learning rate");
    auto* tr_lrmin = trn->add_option("--lr-min", tr.lr_min, "cosine floor");
    auto* tr_wd = trn->add_option("--weight-decay", tr.weight_decay, "decoupled weight decay");
    auto* tr_base = trn->add_option("--base-channels", tr.net.base_channels, "width C0");
    auto* tr_multopt = trn->add_option("--multipliers", tr_mult, "comma list, e.g. 2,4");
    auto* tr_dsig = trn->add_option("--d-sigma", tr.net.d_sigma, "noise embedding dim");
    auto* tr_nres = trn->add_option("--n-res", tr.net.n_res, "residual blocks per stage");

    // sample
    SampleArgs sm;
    std::string sm_config;
    auto* smp = app.add_subcommand("sample", "generate high-resolution ensembles");
    smp->add_option("--config", sm_config, "JSON config file");
    auto* sm_data = smp->add_option("--dataset", sm.dataset_dir, "dataset directory");
    auto* sm_ckpt = smp->add_option("--checkpoint", sm.checkpoint, "EDP1 checkpoint");
    auto* sm_out = smp->add_option("--out", sm.out_dir, "output directory");
    auto* sm_den = smp->add_option("--denoiser", sm.denoiser, "net | oracle");
    auto* sm_sampler = smp->add_option("--sampler", sm.sampler, "ode | sde");
    auto* sm_split = smp->add_option("--split", sm.split, "test | train");
    auto* sm_n = smp->add_option("--n", sm.n, "ensemble size");
    auto* sm_seed = smp->add_option("--seed", sm.seed, "rng seed");
    auto* sm_N = smp->add_option("--steps", sm.schedule_n, "schedule length N");
    auto* sm_smin = smp->add_option("--sigma-min", sm.sigma_min, "schedule sigma_min");
    auto* sm_smax = smp->add_option("--sigma-max", sm.sigma_max, "schedule sigma_max");
    auto* sm_rho = smp->add_option("--rho", sm.rho, "schedule exponent");
    auto* sm_lead = smp->add_option("--lead-hours", sm.lead_hours, "lead time metadata");

    // evaluate
    EvaluateArgs ev;
    std::string ev_config;
    auto* evl = app.add_subcommand("evaluate", "verify ensembles against stations");
    evl->add_option("--config", ev_config, "JSON config file");
    auto* ev_dir = evl->add_option("--ensembles", ev.ensemble_dir, "ensemble directory");
    auto* ev_obs = evl->add_option("--obs", ev.obs_csv, "observations CSV");
    auto* ev_out = evl->add_option("--out", ev.out_prefix, "report path prefix");

    // oracle-check
    double perturb = 0.0;
    bool list_only = false;
    auto* orc = app.add_subcommand("oracle-check", "run the analytic self-check suites");
    orc->add_option("--perturb-coeff", perturb, "fault injection on c_skip");
    orc->add_flag("--list", list_only, "list checks without running");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    if (gen->parsed()) {
        const auto j = load_config(gd_config);
        cfg(j, "task", gd_task, gd.task);
        cfg(j, "out", gd_out, gd.out_dir);
        cfg(j, "fine", gd_fine, gd.fine);
        cfg(j, "factor", gd_factor, gd.factor);
        cfg(j, "count", gd_count, gd.count);
        cfg(j, "train_count", gd_train, gd.train_count);
        cfg(j, "gain_a", gd_a, gd.gain_a);
        cfg(j, "offset_b", gd_b, gd.offset_b);
        cfg(j, "noise_std", gd_s, gd.noise_std);
        cfg(j, "roughness", gd_rough, gd.roughness);
        cfg(j, "bias_amp", gd_bias, gd.bias_amp);
        cfg(j, "stations", gd_nst, gd.n_stations);
        cfg(j, "obs_noise", gd_onoise, gd.obs_noise);
        seed_fallback(j, gd_seed, gd.seed);
        downscale::pipeline::cmd_gen_data(gd);
        return kOk;
    }
    if (trn->parsed()) {
        const auto j = load_config(tr_config);
        cfg(j, "dataset", tr_data, tr.dataset_dir);
        cfg(j, "out", tr_out, tr.out_dir);
        cfg(j, "steps", tr_steps, tr.steps);
        cfg(j, "augment", tr_aug, tr.augment);
        cfg(j, "overfit_one", tr_overfit, tr.overfit_one);
        cfg(j, "fixed_sigma", tr_fs, tr.fixed_sigma);
        cfg(j, "regression", tr_reg, tr.regression);
        cfg(j, "lr", tr_lr, tr.lr);
        cfg(j, "lr_min", tr_lrmin, tr.lr_min);
        cfg(j, "weight_decay", tr_wd, tr.weight_decay);
        cfg(j, "base_channels", tr_base, tr.net.base_channels);
        cfg(j, "d_sigma", tr_dsig, tr.net.d_sigma);
        cfg(j, "n_res", tr_nres, tr.net.n_res);
        std::string mult = tr_mult;
        cfg(j, "multipliers", tr_multopt, mult);
        seed_fallback(j, tr_seed, tr.seed);
        if (!mult.empty()) {
            tr.net.multipliers.clear();
            std::string tok;
            for (char ch : mult + ",") {
                if (ch == ',') {
                    if (!tok.empty()) tr.net.multipliers.push_back(std::stoi(tok));
                    tok.clear();
                } else {
                    tok += ch;
                }
            }
        }
        if (tr.dataset_dir.empty())
            throw CLI::ValidationError("train", "--dataset is required");
        downscale::pipeline::cmd_train(tr);
        return kOk;
    }
    if (smp->parsed()) {
        const auto j = load_config(sm_config);
        cfg(j, "dataset", sm_data, sm.dataset_dir);
        cfg(j, "checkpoint", sm_ckpt, sm.checkpoint);
        cfg(j, "out", sm_out, sm.out_dir);
        cfg(j, "denoiser", sm_den, sm.denoiser);
        cfg(j, "sampler", sm_sampler, sm.sampler);
        cfg(j, "split", sm_split, sm.split);
        cfg(j, "n", sm_n, sm.n);
        cfg(j, "steps", sm_N, sm.schedule_n);
        cfg(j, "sigma_min", sm_smin, sm.sigma_min);
        cfg(j, "sigma_max", sm_smax, sm.sigma_max);
        cfg(j, "rho", sm_rho, sm.rho);
        cfg(j, "lead_hours", sm_lead, sm.lead_hours);
        seed_fallback(j, sm_seed, sm.seed);
        if (sm.dataset_dir.empty())
            throw CLI::ValidationError("sample", "--dataset is required");
        downscale::pipeline::cmd_sample(sm);
        return kOk;
    }
    if (evl->parsed()) {
        const auto j = load_config(ev_config);
        cfg(j, "ensembles", ev_dir, ev.ensemble_dir);
        cfg(j, "obs", ev_obs, ev.obs_csv);
        cfg(j, "out", ev_out, ev.out_prefix);
        if (ev.ensemble_dir.empty() || ev.obs_csv.empty())
            throw CLI::ValidationError("evaluate", "--ensembles and --obs are required");
        downscale::pipeline::cmd_evaluate(ev);
        return kOk;
    }
    if (orc->parsed())
        return downscale::pipeline::cmd_oracle_check(perturb, list_only) ? kOk : kCheckFailure;
    return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const downscale::TrainAbortError& e) {
        std::fprintf(stderr, "abort: %s\n", e.what());
        return kAbort;
    } catch (const downscale::pipeline::NoStationsError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kAbort;
    } catch (const downscale::InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const downscale::FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const std::out_of_range& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "abort: %s\n", e.what());
        return kAbort;
    }
}
