#include "downscale/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "downscale/edf_io.hpp"

namespace downscale {

namespace fs = std::filesystem;

std::vector<Channel> surface_channels() {
    return {{"t2m", "K"}, {"u10", "m s-1"}, {"v10", "m s-1"}, {"msl", "Pa"}};
}

Grid coarsened_grid(const Grid& fine, int factor) {
    if (factor < 1) throw std::invalid_argument("coarsened_grid: factor must be >= 1");
    if (fine.h % factor != 0 || fine.w % factor != 0)
        throw std::invalid_argument("coarsen: grid dimensions not divisible by factor");
    Grid g;
    g.lat0 = fine.lat0 + 0.5 * (factor - 1) * fine.dlat;
    g.lon0 = fine.lon0 + 0.5 * (factor - 1) * fine.dlon;
    g.dlat = fine.dlat * factor;
    g.dlon = fine.dlon * factor;
    g.h = fine.h / factor;
    g.w = fine.w / factor;
    return g;
}

Field coarsen(const Field& fine, int factor) {
    const Grid cg = coarsened_grid(fine.grid, factor);
    Field out(cg, fine.channels);
    const int c = fine.n_channels();
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int r = 0; r < cg.h; ++r)
        for (int col = 0; col < cg.w; ++col)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int dr = 0; dr < factor; ++dr)
                    for (int dc = 0; dc < factor; ++dc)
                        acc += fine.at(r * factor + dr, col * factor + dc, ch);
                out.at(r, col, ch) = acc * inv;
            }
    return out;
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Smooth random plane built from a handful of low-order Fourier modes.
void add_smooth_modes(Field& f, int channel, Rng& rng, int max_mode, double amp) {
    const int h = f.grid.h, w = f.grid.w;
    const int n_modes = 3;
    for (int m = 0; m < n_modes; ++m) {
        const double kx = static_cast<double>(rng.uniform_index(max_mode + 1));
        const double ky = static_cast<double>(rng.uniform_index(max_mode + 1));
        const double phase = kTwoPi * rng.uniform();
        const double a = amp * rng.normal() / std::sqrt(static_cast<double>(n_modes));
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                f.at(r, c, channel) +=
                    a * std::cos(kTwoPi * (kx * c / w + ky * r / h) + phase);
    }
}

std::string grid_hash_input(const Dataset& ds) {
    return ds.manifest.to_json();
}

nlohmann::json grid_to_json(const Grid& g) {
    return nlohmann::json{{"lat0", g.lat0}, {"lon0", g.lon0}, {"dlat", g.dlat},
                          {"dlon", g.dlon}, {"h", g.h},       {"w", g.w}};
}

Grid grid_from_json(const nlohmann::json& j) {
    return Grid(j.at("lat0").get<double>(), j.at("lon0").get<double>(),
                j.at("dlat").get<double>(), j.at("dlon").get<double>(), j.at("h").get<int>(),
                j.at("w").get<int>());
}

void compute_split_stats(Dataset& ds) {
    std::vector<Field> train_fine(ds.fine.begin(), ds.fine.begin() + ds.manifest.train_count);
    ds.manifest.stats = compute_stats(train_fine);
}

void fill_valid_times(DatasetManifest& m) {
    m.valid_times.resize(m.count);
    for (int i = 0; i < m.count; ++i) m.valid_times[i] = synthetic_valid_time(6LL * i);
}

}  // namespace

Dataset gen_gaussian_task(const GaussianTaskSpec& spec, const Grid& fine_grid, int factor,
                          int count, int train_count, uint64_t seed) {
    if (!(spec.noise_std > 0.0)) throw std::invalid_argument("gen_gaussian_task: noise_std <= 0");
    if (count < 1 || train_count < 1 || train_count > count)
        throw std::invalid_argument("gen_gaussian_task: bad counts");
    Dataset ds;
    ds.manifest.task = "gaussian";
    ds.manifest.seed = seed;
    ds.manifest.count = count;
    ds.manifest.train_count = train_count;
    ds.manifest.fine_grid = fine_grid;
    ds.manifest.coarse_grid = coarsened_grid(fine_grid, factor);
    ds.manifest.channels = surface_channels();
    ds.manifest.gauss = spec;
    fill_valid_times(ds.manifest);

    Rng rng(seed);
    const auto channels = surface_channels();
    const int nch = static_cast<int>(channels.size());
    for (int i = 0; i < count; ++i) {
        Field coarse(ds.manifest.coarse_grid, channels);
        for (int ch = 0; ch < nch; ++ch) add_smooth_modes(coarse, ch, rng, 2, 1.0);
        Field up = upsample_bilinear(coarse, fine_grid);
        Field fine(fine_grid, channels);
        for (size_t j = 0; j < fine.data.size(); ++j)
            fine.data[j] = spec.gain_a * up.data[j] + spec.offset_b +
                           spec.noise_std * rng.normal();
        ds.coarse.push_back(std::move(coarse));
        ds.fine.push_back(std::move(fine));
    }

    ds.statics = Field(fine_grid, {{"z", "1"}, {"lsm", "1"}});
    for (int r = 0; r < fine_grid.h; ++r)
        for (int c = 0; c < fine_grid.w; ++c) {
            ds.statics.at(r, c, 0) = 0.0;
            ds.statics.at(r, c, 1) = 1.0;
        }

    compute_split_stats(ds);
    return ds;
}

Dataset gen_terrain_task(const TerrainTaskSpec& spec, const Grid& fine_grid, int factor,
                         int count, int train_count, uint64_t seed) {
    if (count < 1 || train_count < 1 || train_count > count)
        throw std::invalid_argument("gen_terrain_task: bad counts");
    Dataset ds;
    ds.manifest.task = "terrain";
    ds.manifest.seed = seed;
    ds.manifest.count = count;
    ds.manifest.train_count = train_count;
    ds.manifest.fine_grid = fine_grid;
    ds.manifest.coarse_grid = coarsened_grid(fine_grid, factor);
    ds.manifest.channels = surface_channels();
    ds.manifest.terrain = spec;
    fill_valid_times(ds.manifest);

    Rng rng(seed);
    const auto channels = surface_channels();
    const int nch = static_cast<int>(channels.size());

    // static fields: smooth elevation plus ridged detail, mask from a second
    // smooth plane
    ds.statics = Field(fine_grid, {{"z", "1"}, {"lsm", "1"}});
    {
        Field z(fine_grid, {{"z", "1"}});
        add_smooth_modes(z, 0, rng, 3, 1.0);
        Field mask(fine_grid, {{"m", "1"}});
        add_smooth_modes(mask, 0, rng, 2, 1.0);
        for (int r = 0; r < fine_grid.h; ++r)
            for (int c = 0; c < fine_grid.w; ++c) {
                ds.statics.at(r, c, 0) = z.at(r, c, 0);
                ds.statics.at(r, c, 1) = 0.5 + 0.5 * std::tanh(2.0 * mask.at(r, c, 0));
            }
    }

    // per-channel coupling of the fine truth to elevation
    const double z_coupling[4] = {-0.6, 0.25, 0.25, 0.05};
    const double base_amp[4] = {1.0, 1.0, 1.0, 1.0};

    for (int i = 0; i < count; ++i) {
        Field fine(fine_grid, channels);
        for (int ch = 0; ch < nch; ++ch) {
            add_smooth_modes(fine, ch, rng, 2, base_amp[ch]);
            for (int r = 0; r < fine_grid.h; ++r)
                for (int c = 0; c < fine_grid.w; ++c) {
                    double v = fine.at(r, c, ch);
                    v += z_coupling[ch] * ds.statics.at(r, c, 0);
                    v += spec.roughness * rng.normal();
                    fine.at(r, c, ch) = v;
                }
        }
        Field coarse = coarsen(fine, factor);
        if (spec.bias_amp != 0.0)
            for (int ch = 0; ch < nch; ++ch) add_smooth_modes(coarse, ch, rng, 1, spec.bias_amp);
        ds.coarse.push_back(std::move(coarse));
        ds.fine.push_back(std::move(fine));
    }

    compute_split_stats(ds);
    return ds;
}

std::vector<Observation> gen_stations(const std::vector<Field>& truths,
                                      const std::vector<std::string>& valid_times,
                                      int n_stations, double obs_noise_std, uint64_t seed) {
    if (n_stations < 1) throw std::invalid_argument("gen_stations: need n_stations >= 1");
    if (obs_noise_std < 0.0) throw std::invalid_argument("gen_stations: negative noise std");
    if (truths.empty() || truths.size() != valid_times.size())
        throw std::invalid_argument("gen_stations: truths and valid_times must align");
    const Grid& g = truths[0].grid;

    Rng rng(seed);
    std::vector<std::pair<double, double>> locations(n_stations);
    for (int s = 0; s < n_stations; ++s) {
        // uniform over the node hull so collocation stays strictly interior
        const double fr = rng.uniform() * (g.h - 1);
        const double fc = rng.uniform() * (g.w - 1);
        locations[s] = {g.lat0 + fr * g.dlat, g.lon0 + fc * g.dlon};
    }

    std::vector<Observation> obs;
    for (size_t t = 0; t < truths.size(); ++t) {
        const Field& truth = truths[t];
        const int iu = truth.channel_index("u10");
        const int iv = truth.channel_index("v10");
        for (int s = 0; s < n_stations; ++s) {
            const auto [lat, lon] = locations[s];
            char sid[16];
            std::snprintf(sid, sizeof(sid), "S%04d", s);
            for (int ch = 0; ch < truth.n_channels(); ++ch) {
                Observation o;
                o.station_id = sid;
                o.lat = lat;
                o.lon = lon;
                o.valid_time = valid_times[t];
                o.variable = truth.channels[ch].name;
                o.value = bilinear_sample(truth, lat, lon, ch) + obs_noise_std * rng.normal();
                obs.push_back(std::move(o));
            }
            if (iu >= 0 && iv >= 0) {
                Observation o;
                o.station_id = sid;
                o.lat = lat;
                o.lon = lon;
                o.valid_time = valid_times[t];
                o.variable = "wind_speed";
                o.value = wind_speed(bilinear_sample(truth, lat, lon, iu),
                                     bilinear_sample(truth, lat, lon, iv)) +
                          obs_noise_std * rng.normal();
                obs.push_back(std::move(o));
            }
        }
    }
    return obs;
}

std::string synthetic_valid_time(long long hours) {
    // civil date arithmetic from days since 1970-01-01 (Hinnant's algorithm)
    const long long epoch_days = 20270;  // 2025-07-01
    long long total_hours = 0 + hours;
    long long days = epoch_days + total_hours / 24;
    int hour = static_cast<int>(total_hours % 24);
    if (hour < 0) {
        hour += 24;
        --days;
    }
    long long z = days + 719468;
    const long long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long long y = static_cast<long long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    const long long year = y + (m <= 2);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02d:00:00Z", year, m, d, hour);
    return buf;
}

std::string DatasetManifest::to_json() const {
    nlohmann::json j;
    j["task"] = task;
    j["seed"] = seed;
    j["count"] = count;
    j["train_count"] = train_count;
    j["factor"] = coarse_grid.h > 0 ? fine_grid.h / coarse_grid.h : 0;
    j["coarse_grid"] = grid_to_json(coarse_grid);
    j["fine_grid"] = grid_to_json(fine_grid);
    j["channels"] = nlohmann::json::array();
    for (const auto& ch : channels) j["channels"].push_back({{"name", ch.name}, {"unit", ch.unit}});
    if (task == "gaussian")
        j["params"] = {{"gain_a", gauss.gain_a},
                       {"offset_b", gauss.offset_b},
                       {"noise_std", gauss.noise_std}};
    else
        j["params"] = {{"roughness", terrain.roughness}, {"bias_amp", terrain.bias_amp}};
    j["stats"] = {{"names", stats.channel_names}, {"mean", stats.mean}, {"std", stats.std}};
    j["valid_times"] = valid_times;
    j["coarse_files"] = coarse_files;
    j["fine_files"] = fine_files;
    j["static_file"] = static_file;
    nlohmann::json hashes = nlohmann::json::object();
    for (const auto& [file, hash] : file_hashes) hashes[file] = hash;
    j["file_hashes"] = hashes;
    j["config_hash"] = config_hash;
    return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    DatasetManifest m;
    m.task = j.at("task").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    m.count = j.at("count").get<int>();
    m.train_count = j.at("train_count").get<int>();
    m.coarse_grid = grid_from_json(j.at("coarse_grid"));
    m.fine_grid = grid_from_json(j.at("fine_grid"));
    for (const auto& ch : j.at("channels"))
        m.channels.push_back({ch.at("name").get<std::string>(), ch.at("unit").get<std::string>()});
    if (m.task == "gaussian") {
        m.gauss.gain_a = j.at("params").at("gain_a").get<double>();
        m.gauss.offset_b = j.at("params").at("offset_b").get<double>();
        m.gauss.noise_std = j.at("params").at("noise_std").get<double>();
    } else if (m.task == "terrain") {
        m.terrain.roughness = j.at("params").at("roughness").get<double>();
        m.terrain.bias_amp = j.at("params").at("bias_amp").get<double>();
    } else {
        throw std::runtime_error("manifest: unknown task " + m.task);
    }
    m.stats.channel_names = j.at("stats").at("names").get<std::vector<std::string>>();
    m.stats.mean = j.at("stats").at("mean").get<std::vector<double>>();
    m.stats.std = j.at("stats").at("std").get<std::vector<double>>();
    m.valid_times = j.at("valid_times").get<std::vector<std::string>>();
    m.coarse_files = j.at("coarse_files").get<std::vector<std::string>>();
    m.fine_files = j.at("fine_files").get<std::vector<std::string>>();
    m.static_file = j.at("static_file").get<std::string>();
    for (const auto& [file, hash] : j.at("file_hashes").items())
        m.file_hashes.emplace_back(file, hash.get<std::string>());
    m.config_hash = j.at("config_hash").get<std::string>();
    return m;
}

void write_dataset(const std::string& dir, const Dataset& ds_in) {
    Dataset ds = ds_in;
    fs::create_directories(fs::path(dir) / "pairs");

    ds.manifest.coarse_files.clear();
    ds.manifest.fine_files.clear();
    ds.manifest.file_hashes.clear();
    char name[64];
    for (int i = 0; i < ds.manifest.count; ++i) {
        std::snprintf(name, sizeof(name), "pairs/coarse_%04d.edf", i);
        ds.manifest.coarse_files.push_back(name);
        std::snprintf(name, sizeof(name), "pairs/fine_%04d.edf", i);
        ds.manifest.fine_files.push_back(name);
    }
    ds.manifest.static_file = "static.edf";

    auto write_and_hash = [&](const std::string& rel, const Field& f) {
        const std::string bytes = encode_edf(f);
        const std::string path = (fs::path(dir) / rel).string();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot open for write: " + path);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        ds.manifest.file_hashes.emplace_back(rel, hash_hex(bytes));
    };
    for (int i = 0; i < ds.manifest.count; ++i) {
        write_and_hash(ds.manifest.coarse_files[i], ds.coarse[i]);
        write_and_hash(ds.manifest.fine_files[i], ds.fine[i]);
    }
    write_and_hash(ds.manifest.static_file, ds.statics);

    ds.manifest.config_hash = hash_hex(grid_hash_input(ds));

    std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!mf) throw InputError("cannot write manifest in " + dir);
    const std::string text = ds.manifest.to_json();
    mf.write(text.data(), static_cast<std::streamsize>(text.size()));
}

Dataset read_dataset(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!mf) throw InputError("no manifest.json in " + dir);
    std::string text((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
    Dataset ds;
    ds.manifest = DatasetManifest::from_json(text);

    auto read_checked = [&](const std::string& rel) {
        const std::string path = (fs::path(dir) / rel).string();
        std::ifstream in(path, std::ios::binary);
        if (!in) throw InputError("dataset file missing: " + path);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        for (const auto& [file, hash] : ds.manifest.file_hashes)
            if (file == rel && hash != hash_hex(bytes))
                throw FormatError("hash mismatch for " + rel, 0);
        return decode_edf(bytes);
    };
    for (const auto& f : ds.manifest.coarse_files) ds.coarse.push_back(read_checked(f));
    for (const auto& f : ds.manifest.fine_files) ds.fine.push_back(read_checked(f));
    ds.statics = read_checked(ds.manifest.static_file);
    return ds;
}

}  // namespace downscale
