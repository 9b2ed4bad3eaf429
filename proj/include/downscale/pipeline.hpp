#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "downscale/net.hpp"
#include "downscale/optimizer.hpp"

namespace downscale::pipeline {

// No station could be collocated at all; maps to exit code 3.
class NoStationsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GenDataArgs {
    std::string task = "gaussian";
    std::string out_dir = "dataset";
    int fine = 32;
    int factor = 4;
    int count = 48;
    int train_count = 40;
    double gain_a = 1.0;
    double offset_b = 0.3;
    double noise_std = 1.0;
    double roughness = 0.3;
    double bias_amp = 0.3;
    int n_stations = 20;
    double obs_noise = 0.0;
    uint64_t seed = 1;
};

struct TrainArgs {
    std::string dataset_dir;
    std::string out_dir = "run";
    NetConfig net;
    long long steps = 2000;
    uint64_t seed = 1;
    bool augment = true;
    bool overfit_one = false;
    double fixed_sigma = 0.0;
    bool regression = false;
    double lr = 1e-4;
    double lr_min = 1e-5;
    double weight_decay = 1e-5;
};

struct SampleArgs {
    std::string dataset_dir;
    std::string checkpoint;  // empty when denoiser == "oracle"
    std::string out_dir = "samples";
    std::string denoiser = "net";  // net | oracle
    std::string sampler = "ode";   // ode | sde
    std::string split = "test";    // test | train
    int n = 16;
    uint64_t seed = 1;
    int schedule_n = 128;
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    double lead_hours = 0.0;
};

struct EvaluateArgs {
    std::string ensemble_dir;
    std::string obs_csv;
    std::string out_prefix = "report";
};

void cmd_gen_data(const GenDataArgs& args);
void cmd_train(const TrainArgs& args);
void cmd_sample(const SampleArgs& args);
void cmd_evaluate(const EvaluateArgs& args);

// Runs the oracle suites; prints one line per check. Returns true when every
// check passed. list_only prints the names without running anything.
bool cmd_oracle_check(double perturb_coeff, bool list_only);

}  // namespace downscale::pipeline
