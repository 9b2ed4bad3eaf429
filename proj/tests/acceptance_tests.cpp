// Acceptance suite: one test case per criterion, each printing a single
// [PASS]/[FAIL] line. Criteria 9-11 drive the full pipeline through the same
// command implementations the CLI uses and leave their artifacts in a
// temporary directory.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "downscale/checks.hpp"
#include "downscale/pipeline.hpp"
#include "downscale/synth.hpp"
#include "downscale/trainer.hpp"
#include "downscale/verify.hpp"

namespace fs = std::filesystem;
using namespace downscale;

namespace {

void report_line(int criterion, const char* label, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, label,
                detail.c_str());
    std::fflush(stdout);
}

void run_check(int criterion, const char* label, const checks::CheckResult& result) {
    report_line(criterion, label, result.pass, result.detail);
    CHECK(result.pass);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

struct PipelineArtifacts {
    fs::path root;
    nlohmann::json report;
};

// The end-to-end fixture shared by criteria 9-11: gaussian task, desk U-Net,
// 4000 training steps at batch size 1, 16-member ensembles on the held-out
// split, station verification against the bilinearly upsampled deterministic
// baseline.
PipelineArtifacts run_pipeline(const fs::path& root) {
    fs::remove_all(root);
    fs::create_directories(root);

    pipeline::GenDataArgs gd;
    gd.task = "gaussian";
    gd.out_dir = (root / "dataset").string();
    gd.fine = 16;
    gd.factor = 4;
    gd.count = 48;
    gd.train_count = 40;
    gd.gain_a = 1.0;
    gd.offset_b = 0.3;
    gd.noise_std = 1.0;
    gd.n_stations = 20;
    gd.obs_noise = 0.0;
    gd.seed = 11;
    pipeline::cmd_gen_data(gd);

    pipeline::TrainArgs tr;
    tr.dataset_dir = gd.out_dir;
    tr.out_dir = (root / "run").string();
    tr.steps = 4000;
    tr.seed = 3;
    tr.lr = 1e-3;
    tr.lr_min = 1e-5;
    pipeline::cmd_train(tr);

    pipeline::SampleArgs sm;
    sm.dataset_dir = gd.out_dir;
    sm.checkpoint = (root / "run/checkpoint.edp").string();
    sm.out_dir = (root / "samples").string();
    sm.n = 16;
    sm.seed = 7;
    pipeline::cmd_sample(sm);

    pipeline::EvaluateArgs ev;
    ev.ensemble_dir = sm.out_dir;
    ev.obs_csv = (root / "dataset/stations.csv").string();
    ev.out_prefix = (root / "report").string();
    pipeline::cmd_evaluate(ev);

    PipelineArtifacts artifacts;
    artifacts.root = root;
    artifacts.report = nlohmann::json::parse(slurp(root / "report.json"));
    return artifacts;
}

const nlohmann::json* find_cell(const nlohmann::json& report, const std::string& variable) {
    for (const auto& cell : report.at("cells"))
        if (cell.at("variable").get<std::string>() == variable) return &cell;
    return nullptr;
}

fs::path acceptance_root() { return fs::temp_directory_path() / "downscale_acceptance"; }

}  // namespace

TEST_CASE("criterion 1: preconditioning coefficient identities") {
    run_check(1, "coefficient identities to 1e-12", checks::check_coeff_identities());
}

TEST_CASE("criterion 2: schedule endpoints") {
    run_check(2, "sigma_1 = 80, sigma_128 = 0.002, strictly decreasing",
              checks::check_schedule_endpoints());
}

TEST_CASE("criterion 3: ensemble CRPS closed form vs integral oracle") {
    run_check(3, "closed form within 1e-6 of the integral", checks::check_crps_quadrature());
}

TEST_CASE("criterion 4: finite-difference gradient check") {
    run_check(4, "relative error < 1e-4 on 200 parameters", checks::check_gradients());
}

TEST_CASE("criterion 5: Tweedie consistency of the oracle denoiser") {
    run_check(5, "score matches the analytic Gaussian score to 1e-10", checks::check_tweedie());
}

TEST_CASE("criterion 6: Gaussian transport through the PF-ODE sampler") {
    run_check(6, "per-pixel mean within 3 SE, variance within 5%",
              checks::check_gaussian_transport());
}

TEST_CASE("criterion 7: first-order Euler convergence") {
    run_check(7, "error ratio 2 +- 0.3 under step doubling", checks::check_euler_convergence());
}

TEST_CASE("criterion 8: spectral filter contract") {
    run_check(8, "bypass bit-exact, monotone HF energy, round trip 1e-9",
              checks::check_spectral_filter());
}

TEST_CASE("criteria 9-11: end-to-end pipeline") {
    const fs::path root = acceptance_root();
    const PipelineArtifacts first = run_pipeline(root / "a");

    // criterion 9: positive probabilistic skill against the deterministic
    // bilinear baseline on the held-out split
    {
        const nlohmann::json* all = find_cell(first.report, "all");
        REQUIRE(all != nullptr);
        const double crpss = all->at("crpss").get<double>();
        const bool pass = crpss > 0.0;
        char detail[128];
        std::snprintf(detail, sizeof(detail), "pooled CRPSS %+0.4f over %lld station rows",
                      crpss, all->at("count").get<long long>());
        report_line(9, "diffusion downscaling beats the deterministic baseline", pass, detail);
        CHECK(pass);
    }

    // criterion 10: same architecture trained as an MSE regressor; the
    // diffusion ensemble wins on CRPS while both reach similar RMSE
    {
        const Dataset ds = read_dataset((root / "a/dataset").string());
        const auto& man = ds.manifest;
        UNet net{NetConfig{}};
        TrainConfig tc;
        tc.steps = 4000;
        tc.seed = 3;
        tc.regression = true;
        tc.opt.lr_max = 1e-3;
        const EdmConfig edm;
        const TrainResult reg = train(net, ds, edm, tc);

        const auto obs = read_observations((root / "a/dataset/stations.csv").string());
        ScoreAccumulator acc;
        for (int idx = man.train_count; idx < man.count; ++idx) {
            const Field coarse_std = standardize(ds.coarse[idx], man.stats);
            const Field cond = build_conditioning(coarse_std, ds.statics, man.fine_grid, 0.0);
            const Field pred_std = regression_predict(net, reg.params, cond, edm);
            Field pred(man.fine_grid, man.channels);
            pred.data = pred_std.data;
            pred = destandardize(pred, man.stats);
            const Field baseline =
                destandardize(upsample_bilinear(coarse_std, man.fine_grid), man.stats);
            for (const auto& o : obs) {
                if (o.valid_time != man.valid_times[idx]) continue;
                const std::vector<Observation> one{o};
                const double p = collocate(pred, one).pairs.at(0).forecast;
                const double b = collocate(baseline, one).pairs.at(0).forecast;
                acc.add(o.variable, 0.0, {p}, b, o.value);
            }
        }
        const ScoreReport reg_report = acc.finalize();
        const ScoreCell* reg_all = reg_report.find("all", 0.0);
        REQUIRE(reg_all != nullptr);

        const nlohmann::json* diff_all = find_cell(first.report, "all");
        const double crps_diff = diff_all->at("crps_down").get<double>();
        const double rmse_diff = diff_all->at("rmse_down").get<double>();
        const double crps_reg = reg_all->crps_down;
        const double rmse_reg = reg_all->rmse_down;

        const bool crps_ok = crps_diff < crps_reg;
        const bool rmse_ok = std::abs(rmse_diff / rmse_reg - 1.0) <= 0.15;
        char detail[160];
        std::snprintf(detail, sizeof(detail),
                      "CRPS %0.4f (diffusion) vs %0.4f (regression); RMSE %0.4f vs %0.4f",
                      crps_diff, crps_reg, rmse_diff, rmse_reg);
        report_line(10, "diffusion vs regression ablation", crps_ok && rmse_ok, detail);
        CHECK(crps_ok);
        CHECK(rmse_ok);
    }

    // criterion 11: the identical pipeline rerun produces byte-identical
    // artifacts
    {
        const PipelineArtifacts second = run_pipeline(root / "b");
        const std::vector<std::string> artifacts = {
            "dataset/manifest.json",      "dataset/pairs/fine_0000.edf",
            "dataset/pairs/coarse_0047.edf", "dataset/static.edf",
            "dataset/stations.csv",       "run/checkpoint.edp",
            "run/loss.csv",               "run/train_meta.json",
            "samples/t000/member_00.edf",
            "samples/t000/ensemble.json", "samples/t007/member_15.edf",
            "samples/t007/baseline.edf",  "report.csv",
            "report.json"};
        bool all_equal = true;
        std::string first_diff;
        for (const auto& rel : artifacts) {
            if (slurp(first.root / rel) != slurp(second.root / rel)) {
                all_equal = false;
                if (first_diff.empty()) first_diff = rel;
            }
        }
        report_line(11, "byte-identical artifacts across reruns", all_equal,
                    all_equal ? std::to_string(artifacts.size()) + " artifacts compared"
                              : "first difference: " + first_diff);
        CHECK(all_equal);
    }

    fs::remove_all(root);
}
