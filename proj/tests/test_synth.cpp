#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "downscale/edf_io.hpp"
#include "downscale/spectral.hpp"
#include "downscale/synth.hpp"

using namespace downscale;

namespace {

const Grid kFine(0, 0, 1, 1, 16, 16);

double channel_variance(const Field& f, int ch) {
    double mean = 0.0, var = 0.0;
    const int n = f.grid.h * f.grid.w;
    for (int r = 0; r < f.grid.h; ++r)
        for (int c = 0; c < f.grid.w; ++c) mean += f.at(r, c, ch);
    mean /= n;
    for (int r = 0; r < f.grid.h; ++r)
        for (int c = 0; c < f.grid.w; ++c) {
            const double d = f.at(r, c, ch) - mean;
            var += d * d;
        }
    return var / n;
}

double hf_energy(const Field& f, int ch) {
    const int h = f.grid.h, w = f.grid.w;
    std::vector<double> plane(static_cast<size_t>(h) * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) plane[static_cast<size_t>(r) * w + c] = f.at(r, c, ch);
    const Spectrum s = dft2(plane, h, w);
    double acc = 0.0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double ky = freq_index(r, h), kx = freq_index(c, w);
            if (std::sqrt(kx * kx + ky * ky) > std::min(h, w) / 8.0) acc += std::norm(s.at(r, c));
        }
    return acc;
}

}  // namespace

TEST_CASE("coarsen block means and grid placement") {
    Field f(Grid(0, 0, 1, 1, 2, 2), surface_channels());
    // identity at factor 1
    const Field same = coarsen(f, 1);
    CHECK(same.grid == f.grid);

    Field fine(Grid(0, 0, 1, 1, 4, 4), {{"t2m", "K"}});
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) fine.at(r, c, 0) = 1.0;
    const Field c2 = coarsen(fine, 2);
    CHECK(c2.grid.h == 2);
    CHECK(c2.grid.lat0 == doctest::Approx(0.5));
    CHECK(c2.grid.dlat == doctest::Approx(2.0));
    for (double v : c2.data) CHECK(v == doctest::Approx(1.0));

    fine.at(0, 0, 0) = 1;
    fine.at(0, 1, 0) = 2;
    fine.at(1, 0, 0) = 3;
    fine.at(1, 1, 0) = 6;
    CHECK(coarsen(fine, 2).at(0, 0, 0) == doctest::Approx(3.0));

    Field odd(Grid(0, 0, 1, 1, 5, 4), {{"t2m", "K"}});
    CHECK_THROWS_AS(coarsen(odd, 2), std::invalid_argument);
}

TEST_CASE("gaussian task respects its conditional law") {
    GaussianTaskSpec spec;
    spec.gain_a = 1.3;
    spec.offset_b = -0.4;
    spec.noise_std = 1e-6;
    const Dataset tiny_noise = gen_gaussian_task(spec, kFine, 4, 4, 3, 5);
    for (int i = 0; i < tiny_noise.manifest.count; ++i) {
        const Field up = upsample_bilinear(tiny_noise.coarse[i], kFine);
        for (size_t j = 0; j < up.data.size(); ++j)
            CHECK(tiny_noise.fine[i].data[j] ==
                  doctest::Approx(spec.gain_a * up.data[j] + spec.offset_b).epsilon(1e-4));
    }

    // empirical residual variance over many pairs approaches s^2
    spec.noise_std = 0.7;
    const Dataset ds = gen_gaussian_task(spec, Grid(0, 0, 1, 1, 8, 8), 4, 1000, 999, 6);
    double acc = 0.0;
    long long n = 0;
    for (int i = 0; i < ds.manifest.count; ++i) {
        const Field up = upsample_bilinear(ds.coarse[i], ds.manifest.fine_grid);
        for (size_t j = 0; j < up.data.size(); ++j) {
            const double r = ds.fine[i].data[j] - (spec.gain_a * up.data[j] + spec.offset_b);
            acc += r * r;
            ++n;
        }
    }
    CHECK(acc / n == doctest::Approx(0.49).epsilon(0.10));
}

TEST_CASE("generators are pure functions of the seed") {
    const Dataset a = gen_gaussian_task(GaussianTaskSpec{}, kFine, 4, 6, 4, 77);
    const Dataset b = gen_gaussian_task(GaussianTaskSpec{}, kFine, 4, 6, 4, 77);
    for (int i = 0; i < 6; ++i) {
        CHECK(a.coarse[i].data == b.coarse[i].data);
        CHECK(a.fine[i].data == b.fine[i].data);
    }
    const Dataset c = gen_terrain_task(TerrainTaskSpec{}, kFine, 4, 4, 3, 13);
    const Dataset d = gen_terrain_task(TerrainTaskSpec{}, kFine, 4, 4, 3, 13);
    for (int i = 0; i < 4; ++i) CHECK(c.fine[i].data == d.fine[i].data);
    CHECK(c.statics.data == d.statics.data);
}

TEST_CASE("terrain task structure") {
    // zero roughness and zero bias: the coarse input is exactly the block mean
    TerrainTaskSpec clean;
    clean.roughness = 0.0;
    clean.bias_amp = 0.0;
    const Dataset ds = gen_terrain_task(clean, kFine, 4, 3, 2, 9);
    for (int i = 0; i < ds.manifest.count; ++i) {
        const Field expect = coarsen(ds.fine[i], 4);
        for (size_t j = 0; j < expect.data.size(); ++j)
            CHECK(ds.coarse[i].data[j] == doctest::Approx(expect.data[j]).epsilon(1e-12));
    }

    // with roughness, the fine truth carries more high-frequency energy than
    // the upsampled coarse input
    TerrainTaskSpec rough;
    rough.roughness = 0.4;
    const Dataset rds = gen_terrain_task(rough, kFine, 4, 3, 2, 10);
    for (int i = 0; i < rds.manifest.count; ++i) {
        const Field up = upsample_bilinear(rds.coarse[i], kFine);
        for (int ch = 0; ch < 4; ++ch) CHECK(hf_energy(rds.fine[i], ch) > hf_energy(up, ch));
    }

    // land-sea mask within [0, 1]
    for (int r = 0; r < kFine.h; ++r)
        for (int c = 0; c < kFine.w; ++c) {
            CHECK(rds.statics.at(r, c, 1) >= 0.0);
            CHECK(rds.statics.at(r, c, 1) <= 1.0);
        }
}

TEST_CASE("coarsen then upsample never increases variance") {
    const Dataset ds = gen_terrain_task(TerrainTaskSpec{}, kFine, 4, 3, 2, 30);
    for (int i = 0; i < ds.manifest.count; ++i) {
        const Field up = upsample_bilinear(coarsen(ds.fine[i], 4), kFine);
        for (int ch = 0; ch < 4; ++ch)
            CHECK(channel_variance(up, ch) <= channel_variance(ds.fine[i], ch) + 1e-12);
    }
}

TEST_CASE("station generation") {
    GaussianTaskSpec spec;
    const Dataset ds = gen_gaussian_task(spec, kFine, 4, 6, 4, 55);
    std::vector<Field> truth(ds.fine.begin() + 4, ds.fine.end());
    std::vector<std::string> times(ds.manifest.valid_times.begin() + 4,
                                   ds.manifest.valid_times.end());

    // zero observation noise: every row equals the collocated truth
    const auto obs = gen_stations(truth, times, 10, 0.0, 3);
    CHECK(obs.size() == 2 * 10 * 5);  // 2 times, 10 stations, 4 channels + wind
    for (const auto& o : obs) {
        const Field& t = o.valid_time == times[0] ? truth[0] : truth[1];
        double expect;
        if (o.variable == "wind_speed") {
            expect = wind_speed(bilinear_sample(t, o.lat, o.lon, t.channel_index("u10")),
                                bilinear_sample(t, o.lat, o.lon, t.channel_index("v10")));
        } else {
            expect = bilinear_sample(t, o.lat, o.lon, t.channel_index(o.variable));
        }
        CHECK(o.value == doctest::Approx(expect).epsilon(1e-12));
    }

    // noisy observations have zero-mean error
    const auto noisy = gen_stations(truth, times, 1000, 0.25, 4);
    double err_sum = 0.0;
    long long n = 0;
    for (const auto& o : noisy) {
        if (o.variable == "wind_speed") continue;
        const Field& t = o.valid_time == times[0] ? truth[0] : truth[1];
        err_sum += o.value - bilinear_sample(t, o.lat, o.lon, t.channel_index(o.variable));
        ++n;
    }
    CHECK(std::abs(err_sum / n) < 3.0 * 0.25 / std::sqrt(static_cast<double>(n)));

    // determinism
    const auto again = gen_stations(truth, times, 10, 0.0, 3);
    CHECK(observations_to_csv(again) == observations_to_csv(obs));
}

TEST_CASE("synthetic valid times walk the calendar") {
    CHECK(synthetic_valid_time(0) == "2025-07-01T00:00:00Z");
    CHECK(synthetic_valid_time(6) == "2025-07-01T06:00:00Z");
    CHECK(synthetic_valid_time(24) == "2025-07-02T00:00:00Z");
    CHECK(synthetic_valid_time(31 * 24) == "2025-08-01T00:00:00Z");
    CHECK(synthetic_valid_time((31 + 31 + 30 + 31 + 30 + 31) * 24) == "2026-01-01T00:00:00Z");
}

TEST_CASE("dataset io round trips bit-exactly and verifies hashes") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "downscale_synth_test";
    fs::remove_all(dir);

    const Dataset ds = gen_gaussian_task(GaussianTaskSpec{}, kFine, 4, 5, 4, 99);
    write_dataset(dir.string(), ds);
    const Dataset back = read_dataset(dir.string());
    CHECK(back.manifest.task == "gaussian");
    CHECK(back.manifest.count == 5);
    CHECK(back.manifest.train_count == 4);
    CHECK(back.manifest.fine_grid == ds.manifest.fine_grid);
    CHECK(back.manifest.stats.mean == ds.manifest.stats.mean);
    for (int i = 0; i < 5; ++i) {
        // files hold f32; compare against the rounded original
        for (size_t j = 0; j < ds.fine[i].data.size(); ++j)
            CHECK(back.fine[i].data[j] ==
                  static_cast<double>(static_cast<float>(ds.fine[i].data[j])));
    }

    // rewriting the same dataset produces identical bytes
    const auto dir2 = fs::temp_directory_path() / "downscale_synth_test2";
    fs::remove_all(dir2);
    write_dataset(dir2.string(), ds);
    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
    };
    CHECK(slurp(dir / "manifest.json") == slurp(dir2 / "manifest.json"));
    CHECK(slurp(dir / "pairs/fine_0000.edf") == slurp(dir2 / "pairs/fine_0000.edf"));

    // corrupting a pair file trips the recorded hash
    {
        std::fstream f(dir / "pairs/fine_0000.edf",
                       std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(-4, std::ios::end);
        const char junk[4] = {0x13, 0x37, 0x13, 0x37};
        f.write(junk, 4);
    }
    CHECK_THROWS_AS(read_dataset(dir.string()), FormatError);

    // truncating the container is a format error, not a crash
    {
        const std::string bytes = slurp(dir2 / "pairs/fine_0001.edf");
        std::ofstream f(dir2 / "pairs/fine_0001.edf", std::ios::binary | std::ios::trunc);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 3));
    }
    CHECK_THROWS(read_dataset(dir2.string()));

    fs::remove_all(dir);
    fs::remove_all(dir2);
}
