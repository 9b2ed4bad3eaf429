#include "downscale/verify.hpp"

#include "downscale/edf_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace downscale {

double crps_ensemble(const std::vector<double>& members, double y) {
    const size_t n = members.size();
    if (n == 0) throw std::invalid_argument("crps_ensemble: empty ensemble");
    for (double m : members)
        if (!std::isfinite(m)) throw std::invalid_argument("crps_ensemble: non-finite member");
    if (!std::isfinite(y)) throw std::invalid_argument("crps_ensemble: non-finite observation");
    double err = 0.0;
    for (double m : members) err += std::abs(m - y);
    err /= static_cast<double>(n);
    double spread = 0.0;
    for (size_t k = 0; k < n; ++k)
        for (size_t l = 0; l < n; ++l) spread += std::abs(members[k] - members[l]);
    spread /= 2.0 * static_cast<double>(n) * static_cast<double>(n);
    return err - spread;
}

double deterministic_crps(double forecast, double y) { return std::abs(forecast - y); }

double rmse_of_mean(const std::vector<std::vector<double>>& ensembles,
                    const std::vector<double>& observations) {
    if (ensembles.empty() || ensembles.size() != observations.size())
        throw std::invalid_argument("rmse_of_mean: need matching nonempty inputs");
    double acc = 0.0;
    for (size_t i = 0; i < ensembles.size(); ++i) {
        if (ensembles[i].empty()) throw std::invalid_argument("rmse_of_mean: empty ensemble");
        double mean = 0.0;
        for (double v : ensembles[i]) mean += v;
        mean /= static_cast<double>(ensembles[i].size());
        const double d = mean - observations[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(ensembles.size()));
}

double skill_score(double metric_down, double metric_base) {
    if (!(metric_base > 0.0))
        throw std::domain_error("skill_score: baseline metric must be positive");
    return 1.0 - metric_down / metric_base;
}

double wind_speed(double u10, double v10) { return std::sqrt(u10 * u10 + v10 * v10); }

CollocationResult collocate(const Field& field, const std::vector<Observation>& obs) {
    CollocationResult result;
    const int iu = field.channel_index("u10");
    const int iv = field.channel_index("v10");
    for (const auto& o : obs) {
        if (!field.grid.contains(o.lat, o.lon)) {
            ++result.skipped_out_of_domain;
            continue;
        }
        double fc;
        if (o.variable == "wind_speed") {
            if (iu < 0 || iv < 0)
                throw std::runtime_error("collocate: wind_speed needs u10 and v10 channels");
            fc = wind_speed(bilinear_sample(field, o.lat, o.lon, iu),
                            bilinear_sample(field, o.lat, o.lon, iv));
        } else {
            const int ch = field.channel_index(o.variable);
            if (ch < 0) throw std::runtime_error("collocate: field has no channel " + o.variable);
            fc = bilinear_sample(field, o.lat, o.lon, ch);
        }
        result.pairs.push_back({fc, o.value});
    }
    return result;
}

ScoreAccumulator::Bucket& ScoreAccumulator::bucket(const std::string& variable, double lead) {
    for (auto& [key, b] : buckets_)
        if (key.first == variable && key.second == lead) return b;
    buckets_.push_back({{variable, lead}, Bucket{}});
    return buckets_.back().second;
}

void ScoreAccumulator::add(const std::string& variable, double lead_hours,
                           const std::vector<double>& members, double baseline, double observed) {
    double mean = 0.0;
    for (double v : members) mean += v;
    mean /= static_cast<double>(members.size());
    const double crps_down = crps_ensemble(members, observed);
    const double crps_base = deterministic_crps(baseline, observed);
    const double se_down = (mean - observed) * (mean - observed);
    const double se_base = (baseline - observed) * (baseline - observed);
    // take each bucket reference only after all inserts are done: bucket()
    // may grow the vector and invalidate earlier references
    bucket(variable, lead_hours);
    bucket("all", lead_hours);
    for (const char* key : {variable.c_str(), "all"}) {
        Bucket& b = bucket(key, lead_hours);
        b.count += 1;
        b.se_base += se_base;
        b.se_down += se_down;
        b.crps_base += crps_base;
        b.crps_down += crps_down;
    }
}

ScoreReport ScoreAccumulator::finalize() const {
    ScoreReport report;
    report.skipped_stations = skipped_;
    for (const auto& [key, b] : buckets_) {
        ScoreCell cell;
        cell.variable = key.first;
        cell.lead_hours = key.second;
        cell.count = b.count;
        const double n = static_cast<double>(b.count);
        cell.rmse_base = std::sqrt(b.se_base / n);
        cell.rmse_down = std::sqrt(b.se_down / n);
        cell.crps_base = b.crps_base / n;
        cell.crps_down = b.crps_down / n;
        if (cell.rmse_base > 0.0) {
            cell.rmsess_defined = true;
            cell.rmsess = skill_score(cell.rmse_down, cell.rmse_base);
        }
        if (cell.crps_base > 0.0) {
            cell.crpss_defined = true;
            cell.crpss = skill_score(cell.crps_down, cell.crps_base);
        }
        report.cells.push_back(cell);
    }
    return report;
}

namespace {

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string ScoreReport::to_csv() const {
    std::string out =
        "variable,lead_hours,count,rmse_base,rmse_down,crps_base,crps_down,rmsess,crpss\n";
    for (const auto& c : cells) {
        out += c.variable + "," + fmt_g(c.lead_hours) + "," + std::to_string(c.count) + "," +
               fmt_g(c.rmse_base) + "," + fmt_g(c.rmse_down) + "," + fmt_g(c.crps_base) + "," +
               fmt_g(c.crps_down) + ",";
        out += c.rmsess_defined ? fmt_g(c.rmsess) : std::string();
        out += ",";
        out += c.crpss_defined ? fmt_g(c.crpss) : std::string();
        out += "\n";
    }
    return out;
}

std::string ScoreReport::to_json() const {
    nlohmann::json j;
    j["skipped_stations"] = skipped_stations;
    j["cells"] = nlohmann::json::array();
    for (const auto& c : cells) {
        nlohmann::json jc;
        jc["variable"] = c.variable;
        jc["lead_hours"] = c.lead_hours;
        jc["count"] = c.count;
        jc["rmse_base"] = c.rmse_base;
        jc["rmse_down"] = c.rmse_down;
        jc["crps_base"] = c.crps_base;
        jc["crps_down"] = c.crps_down;
        if (c.rmsess_defined)
            jc["rmsess"] = c.rmsess;
        else
            jc["rmsess"] = nullptr;
        if (c.crpss_defined)
            jc["crpss"] = c.crpss;
        else
            jc["crpss"] = nullptr;
        j["cells"].push_back(jc);
    }
    return j.dump(2);
}

const ScoreCell* ScoreReport::find(const std::string& variable, double lead_hours) const {
    for (const auto& c : cells)
        if (c.variable == variable && c.lead_hours == lead_hours) return &c;
    return nullptr;
}

std::string observations_to_csv(const std::vector<Observation>& obs) {
    std::string out = "station_id,lat,lon,valid_time,variable,value\n";
    for (const auto& o : obs)
        out += o.station_id + "," + fmt_g(o.lat) + "," + fmt_g(o.lon) + "," + o.valid_time + "," +
               o.variable + "," + fmt_g(o.value) + "\n";
    return out;
}

std::vector<Observation> observations_from_csv(const std::string& text) {
    std::vector<Observation> obs;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("observations CSV: empty file");
    if (line != "station_id,lat,lon,valid_time,variable,value")
        throw std::runtime_error("observations CSV: unexpected header: " + line);
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string fields[6];
        for (int i = 0; i < 6; ++i)
            if (!std::getline(ls, fields[i], i == 5 ? '\n' : ','))
                throw std::runtime_error("observations CSV: malformed line " +
                                         std::to_string(lineno));
        Observation o;
        o.station_id = fields[0];
        o.lat = std::stod(fields[1]);
        o.lon = std::stod(fields[2]);
        o.valid_time = fields[3];
        o.variable = fields[4];
        o.value = std::stod(fields[5]);
        obs.push_back(std::move(o));
    }
    return obs;
}

void write_observations(const std::string& path, const std::vector<Observation>& obs) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot open for write: " + path);
    const std::string text = observations_to_csv(obs);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::vector<Observation> read_observations(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return observations_from_csv(text);
}

}  // namespace downscale
