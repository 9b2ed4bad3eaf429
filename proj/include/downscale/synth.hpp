#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "downscale/grid.hpp"
#include "downscale/sampler.hpp"
#include "downscale/verify.hpp"

namespace downscale {

// Procedural terrain-task parameters. roughness scales the stochastic
// small-scale component of the fine truth; bias_amp scales the smooth bias
// field added to the coarsened input.
struct TerrainTaskSpec {
    double roughness = 0.3;
    double bias_amp = 0.3;
};

struct DatasetManifest {
    std::string task;  // "gaussian" | "terrain"
    uint64_t seed = 0;
    int count = 0;
    int train_count = 0;
    Grid coarse_grid, fine_grid;
    std::vector<Channel> channels;
    GaussianTaskSpec gauss;
    TerrainTaskSpec terrain;
    StandardizationStats stats;  // from the train split only
    std::vector<std::string> valid_times;
    std::vector<std::string> coarse_files, fine_files;
    std::string static_file;
    std::vector<std::pair<std::string, std::string>> file_hashes;
    std::string config_hash;

    int test_count() const { return count - train_count; }
    std::string to_json() const;
    static DatasetManifest from_json(const std::string& text);
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<Field> coarse, fine;
    Field statics;  // z, lsm on the fine grid
};

// The four surface channels every task generates.
std::vector<Channel> surface_channels();

// Block-center coarse grid obtained by coarsening `fine` by `factor`.
Grid coarsened_grid(const Grid& fine, int factor);

// Block-mean coarsening; H and W must be divisible by factor.
Field coarsen(const Field& fine, int factor);

// Paired dataset with exactly known conditional law u ~ N(a*up(ubar)+b, s^2)
// per fine pixel. Coarse inputs are smooth low-order Fourier fields; statics
// are trivial (z = 0, lsm = 1).
Dataset gen_gaussian_task(const GaussianTaskSpec& spec, const Grid& fine_grid, int factor,
                          int count, int train_count, uint64_t seed);

// Procedural terrain dataset: fine truth = smooth flow + elevation-coupled
// detail + roughness * white noise; coarse input = coarsen(fine) + smooth
// bias field; statics = generated elevation and land-sea mask.
Dataset gen_terrain_task(const TerrainTaskSpec& spec, const Grid& fine_grid, int factor,
                         int count, int train_count, uint64_t seed);

// Synthetic station observations against the given truth fields (one field
// per valid time). Locations are uniform over the node hull and shared across
// times; wind_speed rows are derived from the noiseless u10/v10 and then
// perturbed like every other row.
std::vector<Observation> gen_stations(const std::vector<Field>& truths,
                                      const std::vector<std::string>& valid_times,
                                      int n_stations, double obs_noise_std, uint64_t seed);

// ISO-8601 timestamp `hours` hours after 2025-07-01T00:00:00Z.
std::string synthetic_valid_time(long long hours);

// Dataset directory: manifest.json + EDF1 pair files + static field. Read
// verifies the recorded per-file hashes.
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset read_dataset(const std::string& dir);

}  // namespace downscale
