#pragma once

#include <string>
#include <vector>

#include "downscale/grid.hpp"

namespace downscale {

struct Observation {
    std::string station_id;
    double lat = 0.0, lon = 0.0;
    std::string valid_time;  // ISO-8601
    std::string variable;    // t2m, wind_speed, u10, v10, msl
    double value = 0.0;
};

// Closed-form ensemble CRPS
//   (1/n) sum_k |y_k - y| - 1/(2 n^2) sum_k sum_l |y_k - y_l|,
// computed with the direct O(n^2) pairwise sum. For n = 1 this is exactly the
// absolute error.
double crps_ensemble(const std::vector<double>& members, double y);

// |forecast - y|; the CRPS of a deterministic forecast.
double deterministic_crps(double forecast, double y);

// RMSE between ensemble means and observations over aligned pairs.
double rmse_of_mean(const std::vector<std::vector<double>>& ensembles,
                    const std::vector<double>& observations);

// 1 - metric_down / metric_base. Base must be positive; otherwise the score
// is undefined and reported as missing.
double skill_score(double metric_down, double metric_base);

double wind_speed(double u10, double v10);

struct CollocatedPair {
    double forecast;
    double observed;
};

struct CollocationResult {
    std::vector<CollocatedPair> pairs;
    int skipped_out_of_domain = 0;
};

// Bilinear collocation of `field` at the station locations. Observations with
// variable "wind_speed" are matched against sqrt(u10^2 + v10^2) derived from
// the field's u10/v10 channels. Out-of-domain stations are skipped and
// counted, never extrapolated.
CollocationResult collocate(const Field& field, const std::vector<Observation>& obs);

struct ScoreCell {
    std::string variable;
    double lead_hours = 0.0;
    long long count = 0;
    double rmse_base = 0.0, rmse_down = 0.0;
    double crps_base = 0.0, crps_down = 0.0;
    bool rmsess_defined = false, crpss_defined = false;
    double rmsess = 0.0, crpss = 0.0;
};

struct ScoreReport {
    std::vector<ScoreCell> cells;
    int skipped_stations = 0;

    std::string to_csv() const;
    std::string to_json() const;
    const ScoreCell* find(const std::string& variable, double lead_hours) const;
};

// Streaming accumulator: feed one (station, variable, time) verification row
// at a time, then finalize into a report. Aggregation is per (variable,
// lead_hours) plus a pooled "all" cell.
class ScoreAccumulator {
public:
    void add(const std::string& variable, double lead_hours,
             const std::vector<double>& ensemble_members, double baseline, double observed);
    void add_skipped(int n) { skipped_ += n; }
    ScoreReport finalize() const;

private:
    struct Bucket {
        long long count = 0;
        double se_base = 0.0, se_down = 0.0;  // squared errors
        double crps_base = 0.0, crps_down = 0.0;
    };
    std::vector<std::pair<std::pair<std::string, double>, Bucket>> buckets_;  // insertion order
    int skipped_ = 0;

    Bucket& bucket(const std::string& variable, double lead_hours);
};

// Observations CSV: header station_id,lat,lon,valid_time,variable,value.
std::string observations_to_csv(const std::vector<Observation>& obs);
std::vector<Observation> observations_from_csv(const std::string& text);
void write_observations(const std::string& path, const std::vector<Observation>& obs);
std::vector<Observation> read_observations(const std::string& path);

}  // namespace downscale
