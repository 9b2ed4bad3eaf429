#include "downscale/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"

#include "downscale/checks.hpp"
#include "downscale/edf_io.hpp"
#include "downscale/sampler.hpp"
#include "downscale/synth.hpp"
#include "downscale/trainer.hpp"
#include "downscale/verify.hpp"

namespace downscale::pipeline {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot open for write: " + path.string());
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw InputError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

void cmd_gen_data(const GenDataArgs& args) {
    if (args.fine % args.factor != 0)
        throw std::invalid_argument("gen-data: fine grid size not divisible by factor");
    const Grid fine(0.0, 0.0, 1.0, 1.0, args.fine, args.fine);
    Dataset ds;
    if (args.task == "gaussian") {
        GaussianTaskSpec spec;
        spec.gain_a = args.gain_a;
        spec.offset_b = args.offset_b;
        spec.noise_std = args.noise_std;
        ds = gen_gaussian_task(spec, fine, args.factor, args.count, args.train_count, args.seed);
    } else if (args.task == "terrain") {
        TerrainTaskSpec spec;
        spec.roughness = args.roughness;
        spec.bias_amp = args.bias_amp;
        ds = gen_terrain_task(spec, fine, args.factor, args.count, args.train_count, args.seed);
    } else {
        throw std::invalid_argument("gen-data: unknown task " + args.task);
    }
    write_dataset(args.out_dir, ds);

    // stations over the held-out truth fields
    std::vector<Field> test_truth(ds.fine.begin() + ds.manifest.train_count, ds.fine.end());
    std::vector<std::string> test_times(ds.manifest.valid_times.begin() + ds.manifest.train_count,
                                        ds.manifest.valid_times.end());
    if (!test_truth.empty()) {
        const auto obs = gen_stations(test_truth, test_times, args.n_stations, args.obs_noise,
                                      child_seed(args.seed, 0xABCD));
        write_observations((fs::path(args.out_dir) / "stations.csv").string(), obs);
    }

    std::printf("dataset: task=%s grids=%dx%d->%dx%d count=%d train=%d test=%d seed=%llu\n",
                ds.manifest.task.c_str(), ds.manifest.coarse_grid.h, ds.manifest.coarse_grid.w,
                ds.manifest.fine_grid.h, ds.manifest.fine_grid.w, ds.manifest.count,
                ds.manifest.train_count, ds.manifest.test_count(),
                static_cast<unsigned long long>(ds.manifest.seed));
}

void cmd_train(const TrainArgs& args) {
    const Dataset ds = read_dataset(args.dataset_dir);
    const UNet net(args.net);

    TrainConfig tc;
    tc.steps = args.steps;
    tc.seed = args.seed;
    tc.augment = args.augment;
    tc.overfit_one = args.overfit_one;
    tc.fixed_sigma = args.fixed_sigma;
    tc.regression = args.regression;
    tc.opt.lr_max = args.lr;
    tc.opt.lr_min = args.lr_min;
    tc.opt.weight_decay = args.weight_decay;

    const EdmConfig edm;
    const TrainResult result = train(net, ds, edm, tc);

    fs::create_directories(args.out_dir);
    const std::string ckpt = (fs::path(args.out_dir) / "checkpoint.edp").string();
    save_checkpoint(ckpt, args.net, result.params);
    write_trace((fs::path(args.out_dir) / "loss.csv").string(), result.trace);

    nlohmann::json meta;
    meta["dataset_hash"] = ds.manifest.config_hash;
    meta["steps"] = args.steps;
    meta["seed"] = args.seed;
    meta["augment"] = args.augment;
    meta["overfit_one"] = args.overfit_one;
    meta["fixed_sigma"] = args.fixed_sigma;
    meta["regression"] = args.regression;
    meta["lr"] = args.lr;
    meta["lr_min"] = args.lr_min;
    meta["weight_decay"] = args.weight_decay;
    meta["net"] = nlohmann::json::parse(args.net.to_json());
    meta["param_count"] = net.param_count();
    meta["checkpoint_hash"] = hash_file(ckpt);
    meta["config_hash"] = hash_hex(meta.dump());
    write_text(fs::path(args.out_dir) / "train_meta.json", meta.dump(2));

    std::printf("train: steps=%lld params=%zu final_loss=%.6g checkpoint=%s\n",
                args.steps, net.param_count(), result.trace.back().loss, ckpt.c_str());
}

void cmd_sample(const SampleArgs& args) {
    const Dataset ds = read_dataset(args.dataset_dir);
    const auto& man = ds.manifest;
    const SigmaSchedule sched =
        edm_schedule(args.schedule_n, args.sigma_min, args.sigma_max, args.rho);
    const bool use_sde = args.sampler == "sde";
    if (args.sampler != "ode" && args.sampler != "sde")
        throw std::invalid_argument("sample: sampler must be ode or sde");

    int lo = 0, hi = 0;
    if (args.split == "test") {
        lo = man.train_count;
        hi = man.count;
    } else if (args.split == "train") {
        lo = 0;
        hi = man.train_count;
    } else {
        throw std::invalid_argument("sample: split must be train or test");
    }
    if (lo == hi) throw std::invalid_argument("sample: selected split is empty");

    // denoiser factory per sample index
    std::optional<UNet> net;
    Parameters params;
    std::string checkpoint_hash = "oracle";
    if (args.denoiser == "net") {
        if (args.checkpoint.empty())
            throw std::invalid_argument("sample: --checkpoint required for the net denoiser");
        auto [cfg, loaded] = load_checkpoint(args.checkpoint);
        net.emplace(cfg);
        params = std::move(loaded);
        checkpoint_hash = hash_file(args.checkpoint);
    } else if (args.denoiser != "oracle") {
        throw std::invalid_argument("sample: denoiser must be net or oracle");
    }
    if (args.denoiser == "oracle" && man.task != "gaussian")
        throw std::invalid_argument("sample: the oracle denoiser needs a gaussian dataset");

    const EdmConfig edm;
    fs::create_directories(args.out_dir);

    nlohmann::json effective;
    effective["dataset_hash"] = man.config_hash;
    effective["denoiser"] = args.denoiser;
    effective["sampler"] = args.sampler;
    effective["split"] = args.split;
    effective["n"] = args.n;
    effective["seed"] = args.seed;
    effective["schedule"] = {{"n", sched.n},
                             {"sigma_min", sched.sigma_min},
                             {"sigma_max", sched.sigma_max},
                             {"rho", sched.rho}};
    const std::string config_hash = hash_hex(effective.dump());

    for (int idx = lo; idx < hi; ++idx) {
        const uint64_t sample_seed = child_seed(args.seed, static_cast<uint64_t>(idx));
        const Field coarse_std = standardize(ds.coarse[idx], man.stats);
        const Field cond_up_std = upsample_bilinear(coarse_std, man.fine_grid);
        const Field baseline = destandardize(cond_up_std, man.stats);

        Ensemble ens;
        Field proto(man.fine_grid, man.channels);
        if (args.denoiser == "net") {
            const Field cond = concat_fields(cond_up_std, ds.statics);
            const DenoiserFn den = make_net_denoiser(*net, params, cond, edm);
            ens = sample_ensemble(den, proto, sched, args.n, sample_seed, use_sde);
            for (auto& member : ens.members) member = destandardize(member, man.stats);
        } else {
            // oracle path works in raw units on the analytic task
            const Field cond_up_raw = upsample_bilinear(ds.coarse[idx], man.fine_grid);
            const DenoiserFn den = make_oracle_denoiser(man.gauss, cond_up_raw);
            ens = sample_ensemble(den, proto, sched, args.n, sample_seed, use_sde);
        }

        char dname[32];
        std::snprintf(dname, sizeof(dname), "t%03d", idx - lo);
        const fs::path dir = fs::path(args.out_dir) / dname;
        fs::create_directories(dir);
        nlohmann::json side;
        side["valid_time"] = man.valid_times[idx];
        side["lead_hours"] = args.lead_hours;
        side["n"] = args.n;
        side["base_seed"] = sample_seed;
        side["member_seeds"] = ens.member_seeds;
        side["seed_scheme"] = "splitmix64(splitmix64(base)+k)";
        side["sampler"] = args.sampler;
        side["denoiser"] = args.denoiser;
        side["schedule"] = effective["schedule"];
        side["checkpoint_hash"] = checkpoint_hash;
        side["config_hash"] = config_hash;
        side["baseline"] = "baseline.edf";
        std::vector<std::string> member_files;
        for (int k = 0; k < args.n; ++k) {
            char mname[32];
            std::snprintf(mname, sizeof(mname), "member_%02d.edf", k);
            write_edf((dir / mname).string(), ens.members[k]);
            member_files.push_back(mname);
        }
        side["members"] = member_files;
        write_edf((dir / "baseline.edf").string(), baseline);
        write_text(dir / "ensemble.json", side.dump(2));
    }
    std::printf("sample: wrote %d ensembles of n=%d to %s (denoiser=%s sampler=%s)\n", hi - lo,
                args.n, args.out_dir.c_str(), args.denoiser.c_str(), args.sampler.c_str());
}

void cmd_evaluate(const EvaluateArgs& args) {
    const auto obs = read_observations(args.obs_csv);
    if (obs.empty()) throw NoStationsError("evaluate: no observations");

    // index observations by valid time
    std::map<std::string, std::vector<Observation>> by_time;
    for (const auto& o : obs) by_time[o.valid_time].push_back(o);

    std::vector<fs::path> ensemble_dirs;
    for (const auto& entry : fs::directory_iterator(args.ensemble_dir))
        if (entry.is_directory() && fs::exists(entry.path() / "ensemble.json"))
            ensemble_dirs.push_back(entry.path());
    std::sort(ensemble_dirs.begin(), ensemble_dirs.end());
    if (ensemble_dirs.empty())
        throw std::invalid_argument("evaluate: no ensembles under " + args.ensemble_dir);

    ScoreAccumulator acc;
    long long used_rows = 0;
    for (const auto& dir : ensemble_dirs) {
        const nlohmann::json side = nlohmann::json::parse(read_text(dir / "ensemble.json"));
        const std::string vt = side.at("valid_time").get<std::string>();
        const double lead = side.at("lead_hours").get<double>();
        auto it = by_time.find(vt);
        if (it == by_time.end()) continue;

        std::vector<Field> members;
        for (const auto& m : side.at("members"))
            members.push_back(read_edf((dir / m.get<std::string>()).string()));
        const Field baseline =
            read_edf((dir / side.at("baseline").get<std::string>()).string());

        for (const auto& o : it->second) {
            if (!baseline.grid.contains(o.lat, o.lon)) {
                acc.add_skipped(1);
                continue;
            }
            const std::vector<Observation> one{o};
            std::vector<double> member_vals;
            member_vals.reserve(members.size());
            for (const auto& m : members) {
                const auto res = collocate(m, one);
                member_vals.push_back(res.pairs.at(0).forecast);
            }
            const double base_val = collocate(baseline, one).pairs.at(0).forecast;
            acc.add(o.variable, lead, member_vals, base_val, o.value);
            ++used_rows;
        }
    }
    if (used_rows == 0) throw NoStationsError("evaluate: no collocatable stations");

    const ScoreReport report = acc.finalize();
    write_text(args.out_prefix + ".csv", report.to_csv());
    write_text(args.out_prefix + ".json", report.to_json());
    std::printf("evaluate: %lld rows, %d skipped; report at %s.{csv,json}\n", used_rows,
                report.skipped_stations, args.out_prefix.c_str());
    for (const auto& c : report.cells)
        std::printf("  %-10s lead=%gh n=%lld rmse %.4g->%.4g crps %.4g->%.4g rmsess=%s crpss=%s\n",
                    c.variable.c_str(), c.lead_hours, c.count, c.rmse_base, c.rmse_down,
                    c.crps_base, c.crps_down,
                    c.rmsess_defined ? std::to_string(c.rmsess).c_str() : "n/a",
                    c.crpss_defined ? std::to_string(c.crpss).c_str() : "n/a");
}

bool cmd_oracle_check(double perturb_coeff, bool list_only) {
    if (list_only) {
        for (const auto& name : checks::oracle_check_names()) std::printf("%s\n", name.c_str());
        return true;
    }
    const auto results = checks::run_oracle_checks(perturb_coeff);
    bool all = true;
    for (const auto& r : results) {
        std::printf("[%s] %-24s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.c_str());
        all = all && r.pass;
    }
    return all;
}

}  // namespace downscale::pipeline
