#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "downscale/edf_io.hpp"
#include "downscale/grid.hpp"
#include "downscale/rng.hpp"

using namespace downscale;

namespace {

Field make_field(const Grid& g, std::vector<Channel> ch, uint64_t seed) {
    Field f(g, std::move(ch));
    Rng rng(seed);
    for (auto& v : f.data) v = rng.normal();
    return f;
}

}  // namespace

TEST_CASE("grid construction rejects degenerate shapes") {
    CHECK_THROWS_AS(Grid(0, 0, 1, 1, 1, 4), std::invalid_argument);
    CHECK_THROWS_AS(Grid(0, 0, 0, 1, 4, 4), std::invalid_argument);
    CHECK_NOTHROW(Grid(10, -5, -0.25, 0.5, 4, 8));
}

TEST_CASE("bilinear_sample is exact at nodes and on constants") {
    const Grid g(0, 0, 1, 1, 4, 5);
    Field f = make_field(g, {{"t2m", "K"}}, 1);
    for (int r = 0; r < g.h; ++r)
        for (int c = 0; c < g.w; ++c)
            CHECK(bilinear_sample(f, g.lat(r), g.lon(c), 0) == doctest::Approx(f.at(r, c, 0)));

    Field konst(g, {{"t2m", "K"}});
    for (auto& v : konst.data) v = 3.25;
    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
        const double lat = rng.uniform(0.0, 3.0);
        const double lon = rng.uniform(0.0, 4.0);
        CHECK(bilinear_sample(konst, lat, lon, 0) == doctest::Approx(3.25));
    }
}

TEST_CASE("bilinear_sample blends a 2x2 cell") {
    const Grid g(0, 0, 1, 1, 2, 2);
    Field f(g, {{"t2m", "K"}});
    f.at(0, 0, 0) = 0;
    f.at(0, 1, 0) = 0;
    f.at(1, 0, 0) = 0;
    f.at(1, 1, 0) = 4;
    CHECK(bilinear_sample(f, 0.5, 0.5, 0) == doctest::Approx(1.0));
}

TEST_CASE("bilinear_sample is linear in the field values") {
    const Grid g(0, 0, 0.5, 0.5, 6, 6);
    Field f = make_field(g, {{"t2m", "K"}}, 3);
    Field h = make_field(g, {{"t2m", "K"}}, 4);
    Field combo = f;
    const double a = 1.7, b = -0.4;
    for (size_t i = 0; i < combo.data.size(); ++i)
        combo.data[i] = a * f.data[i] + b * h.data[i];
    Rng rng(5);
    for (int i = 0; i < 25; ++i) {
        const double lat = rng.uniform(0.0, 2.5);
        const double lon = rng.uniform(0.0, 2.5);
        const double expect =
            a * bilinear_sample(f, lat, lon, 0) + b * bilinear_sample(h, lat, lon, 0);
        CHECK(bilinear_sample(combo, lat, lon, 0) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("bilinear_sample rejects points outside coverage") {
    const Grid g(0, 0, 1, 1, 4, 4);
    Field f = make_field(g, {{"t2m", "K"}}, 6);
    CHECK_THROWS_AS(bilinear_sample(f, -0.51, 1.0, 0), std::domain_error);
    CHECK_THROWS_AS(bilinear_sample(f, 1.0, 3.51, 0), std::domain_error);
    // half-cell margin is inside coverage and clamps to the edge value
    CHECK(bilinear_sample(f, -0.49, 0.0, 0) == doctest::Approx(f.at(0, 0, 0)));
    CHECK_THROWS_AS(bilinear_sample(f, 1.0, 1.0, 7), std::invalid_argument);
}

TEST_CASE("upsample_bilinear onto the same grid is the identity") {
    const Grid g(0, 0, 1, 1, 5, 4);
    Field f = make_field(g, {{"t2m", "K"}, {"msl", "Pa"}}, 7);
    const Field out = upsample_bilinear(f, g);
    for (size_t i = 0; i < f.data.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(f.data[i]).epsilon(1e-14));
}

TEST_CASE("upsample_bilinear 2x2 -> 3x3 center equals corner mean") {
    const Grid src(0, 0, 1, 1, 2, 2);
    Field f(src, {{"t2m", "K"}});
    f.at(0, 0, 0) = 1;
    f.at(0, 1, 0) = 2;
    f.at(1, 0, 0) = 3;
    f.at(1, 1, 0) = 6;
    const Grid dst(0, 0, 0.5, 0.5, 3, 3);
    const Field out = upsample_bilinear(f, dst);
    CHECK(out.at(1, 1, 0) == doctest::Approx((1 + 2 + 3 + 6) / 4.0));
    CHECK(out.at(0, 0, 0) == doctest::Approx(1.0));
    CHECK(out.at(2, 2, 0) == doctest::Approx(6.0));
}

TEST_CASE("upsample_bilinear commutes with per-channel affine maps") {
    const Grid src(0, 0, 2, 2, 4, 4);
    const Grid dst(0.5, 0.5, 1, 1, 6, 6);
    Field f = make_field(src, {{"t2m", "K"}}, 8);
    Field g = f;
    for (auto& v : g.data) v = 2.5 * v - 1.25;
    const Field uf = upsample_bilinear(f, dst);
    const Field ug = upsample_bilinear(g, dst);
    for (size_t i = 0; i < uf.data.size(); ++i)
        CHECK(ug.data[i] == doctest::Approx(2.5 * uf.data[i] - 1.25).epsilon(1e-12));
}

TEST_CASE("upsample_bilinear rejects targets beyond coverage") {
    const Grid src(0, 0, 1, 1, 4, 4);
    Field f = make_field(src, {{"t2m", "K"}}, 9);
    const Grid too_wide(0, 0, 1, 1.2, 4, 4);
    CHECK_THROWS_AS(upsample_bilinear(f, too_wide), std::domain_error);
}

TEST_CASE("standardize and destandardize round trip") {
    const Grid g(0, 0, 1, 1, 4, 4);
    Field f = make_field(g, {{"t2m", "K"}, {"u10", "m s-1"}}, 10);
    StandardizationStats stats;
    stats.channel_names = {"t2m", "u10"};
    stats.mean = {10.0, -2.0};
    stats.std = {2.0, 0.5};
    const Field round = destandardize(standardize(f, stats), stats);
    for (size_t i = 0; i < f.data.size(); ++i)
        CHECK(round.data[i] == doctest::Approx(f.data[i]).epsilon(1e-6));

    Field x(g, {{"t2m", "K"}});
    for (auto& v : x.data) v = 14.0;
    StandardizationStats s2;
    s2.channel_names = {"t2m"};
    s2.mean = {10.0};
    s2.std = {2.0};
    CHECK(standardize(x, s2).data[0] == doctest::Approx(2.0));

    StandardizationStats missing;
    missing.channel_names = {"msl"};
    missing.mean = {0.0};
    missing.std = {1.0};
    CHECK_THROWS(standardize(f, missing));
}

TEST_CASE("compute_stats basics") {
    const Grid g(0, 0, 1, 1, 2, 2);
    Field f(g, {{"t2m", "K"}});
    f.data = {-1.0, 1.0, -1.0, 1.0};
    const auto stats = compute_stats({f});
    CHECK(stats.mean[0] == doctest::Approx(0.0));
    CHECK(stats.std[0] == doctest::Approx(1.0));

    Field konst(g, {{"t2m", "K"}});
    for (auto& v : konst.data) v = 5.0;
    CHECK_THROWS(compute_stats({konst}));

    // standardizing by its own stats gives mean 0, std 1
    Field r = make_field(g, {{"t2m", "K"}}, 11);
    const auto rs = compute_stats({r});
    const auto std_field = standardize(r, rs);
    const auto again = compute_stats({std_field});
    CHECK(std::abs(again.mean[0]) < 1e-9);
    CHECK(std::abs(again.std[0] - 1.0) < 1e-9);
}

TEST_CASE("EDF1 round trip is bit exact") {
    const Grid g(48.5, -10.25, -0.25, 0.25, 6, 8);
    Field f(g, {{"t2m", "K"}, {"u10", "m s-1"}, {"v10", "m s-1"}});
    Rng rng(12);
    // values representable in f32 so the round trip is exact
    for (auto& v : f.data) v = static_cast<double>(static_cast<float>(rng.normal()));

    const std::string bytes = encode_edf(f);
    const Field back = decode_edf(bytes);
    CHECK(back.grid == f.grid);
    CHECK(back.channels == f.channels);
    CHECK(back.data == f.data);
    CHECK(encode_edf(back) == bytes);
}

TEST_CASE("EDF1 decode reports truncation with byte offset") {
    const Grid g(0, 0, 1, 1, 2, 2);
    Field f(g, {{"t2m", "K"}});
    const std::string bytes = encode_edf(f);
    CHECK_THROWS_AS(decode_edf(bytes.substr(0, bytes.size() - 3)), FormatError);
    CHECK_THROWS_AS(decode_edf("EDXX"), FormatError);
    try {
        decode_edf(bytes.substr(0, 10));
    } catch (const FormatError& e) {
        CHECK(e.offset() > 0);
        CHECK(e.offset() <= 10);
    }
}

TEST_CASE("EDF1 file io") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "downscale_grid_test";
    fs::create_directories(dir);
    const Grid g(0, 0, 1, 1, 3, 3);
    Field f = make_field(g, {{"t2m", "K"}}, 13);
    for (auto& v : f.data) v = static_cast<double>(static_cast<float>(v));
    const std::string path = (dir / "field.edf").string();
    write_edf(path, f);
    const Field back = read_edf(path);
    CHECK(back.data == f.data);
    CHECK_THROWS_AS(read_edf((dir / "missing.edf").string()), InputError);
    fs::remove_all(dir);
}
