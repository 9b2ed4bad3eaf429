#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "downscale/checks.hpp"
#include "downscale/rng.hpp"
#include "downscale/verify.hpp"

using namespace downscale;

TEST_CASE("crps_ensemble reference values") {
    CHECK(crps_ensemble({2.0}, 2.0) == 0.0);
    CHECK(crps_ensemble({1.0, 3.0}, 2.0) == doctest::Approx(0.5));
    CHECK(crps_ensemble({0.0, 0.0}, 1.0) == doctest::Approx(1.0));
    CHECK(crps_ensemble({5.0}, 2.0) == std::abs(5.0 - 2.0));
    CHECK_THROWS_AS(crps_ensemble({}, 1.0), std::invalid_argument);
}

TEST_CASE("crps closed form matches the integral oracle") {
    const auto result = checks::check_crps_quadrature();
    INFO(result.detail);
    CHECK(result.pass);
}

TEST_CASE("crps invariances") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_index(6));
        std::vector<double> m(n);
        for (auto& v : m) v = rng.normal();
        const double y = rng.normal();
        const double base = crps_ensemble(m, y);

        // permutation
        std::vector<double> perm = m;
        std::swap(perm[0], perm[n - 1]);
        CHECK(crps_ensemble(perm, y) == doctest::Approx(base).epsilon(1e-14));

        // translation
        const double c = rng.normal();
        std::vector<double> shifted = m;
        for (auto& v : shifted) v += c;
        CHECK(crps_ensemble(shifted, y + c) == doctest::Approx(base).epsilon(1e-12));

        // positive scaling
        const double a = 0.1 + 3.0 * rng.uniform();
        std::vector<double> scaled = m;
        for (auto& v : scaled) v *= a;
        CHECK(crps_ensemble(scaled, a * y) == doctest::Approx(a * base).epsilon(1e-12));

        // bounded by the mean absolute error term
        double mae = 0.0;
        for (double v : m) mae += std::abs(v - y);
        mae /= n;
        CHECK(base <= mae + 1e-15);
    }
}

TEST_CASE("rmse_of_mean") {
    CHECK(rmse_of_mean({{1.0, 3.0}}, {2.0}) == doctest::Approx(0.0));
    CHECK(rmse_of_mean({{3.0}}, {1.0}) == doctest::Approx(2.0));
    CHECK(rmse_of_mean({{2.0}, {5.0}}, {1.0, 2.0}) == doctest::Approx(std::sqrt(5.0)));
    CHECK_THROWS_AS(rmse_of_mean({}, {}), std::invalid_argument);
}

TEST_CASE("skill_score") {
    CHECK(skill_score(1.0, 1.0) == doctest::Approx(0.0));
    CHECK(skill_score(0.5, 1.0) == doctest::Approx(0.5));
    CHECK(skill_score(0.95, 1.0) == doctest::Approx(0.05));
    CHECK_THROWS_AS(skill_score(1.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(skill_score(1.0, -1.0), std::domain_error);
}

TEST_CASE("wind_speed") {
    CHECK(wind_speed(0.0, 0.0) == 0.0);
    CHECK(wind_speed(3.0, 4.0) == doctest::Approx(5.0));
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
        const double u = rng.normal(), v = rng.normal();
        CHECK(wind_speed(u, v) == doctest::Approx(wind_speed(-v, u)).epsilon(1e-14));
    }
}

TEST_CASE("deterministic CRPS equals the single-member closed form") {
    CHECK(deterministic_crps(2.0, 2.0) == 0.0);
    CHECK(deterministic_crps(1.0, 4.0) == doctest::Approx(3.0));
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        const double f = rng.normal(), y = rng.normal();
        CHECK(deterministic_crps(f, y) == crps_ensemble({f}, y));
    }
}

TEST_CASE("collocate") {
    const Grid g(0, 0, 1, 1, 2, 2);
    Field f(g, {{"t2m", "K"}, {"u10", "m s-1"}, {"v10", "m s-1"}});
    f.at(0, 0, 0) = 0;
    f.at(0, 1, 0) = 0;
    f.at(1, 0, 0) = 0;
    f.at(1, 1, 0) = 4;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            f.at(r, c, 1) = 3.0;
            f.at(r, c, 2) = 4.0;
        }

    std::vector<Observation> obs;
    obs.push_back({"A", 1.0, 1.0, "t", "t2m", 4.0});         // node
    obs.push_back({"B", 0.5, 0.5, "t", "t2m", 1.0});         // cell center
    obs.push_back({"C", 0.5, 0.5, "t", "wind_speed", 5.0});  // derived
    obs.push_back({"D", 9.0, 9.0, "t", "t2m", 0.0});         // outside
    obs.push_back({"E", 0.25, 0.75, "t", "u10", 3.0});       // constant channel

    const auto result = collocate(f, obs);
    REQUIRE(result.pairs.size() == 4);
    CHECK(result.skipped_out_of_domain == 1);
    CHECK(result.pairs[0].forecast == doctest::Approx(4.0));
    CHECK(result.pairs[1].forecast == doctest::Approx(1.0));
    CHECK(result.pairs[2].forecast == doctest::Approx(5.0));
    CHECK(result.pairs[3].forecast == doctest::Approx(3.0));
}

TEST_CASE("score accumulation and report emission") {
    ScoreAccumulator acc;
    // two stations, one variable: hand-checkable aggregates
    acc.add("t2m", 6.0, {1.0, 3.0}, 1.0, 2.0);  // crps 0.5, mean err 0, base err 1
    acc.add("t2m", 6.0, {0.0, 0.0}, 2.0, 1.0);  // crps 1.0, mean err -1, base err 1
    acc.add_skipped(2);
    const ScoreReport report = acc.finalize();

    const ScoreCell* cell = report.find("t2m", 6.0);
    REQUIRE(cell != nullptr);
    CHECK(cell->count == 2);
    CHECK(cell->crps_down == doctest::Approx(0.75));
    CHECK(cell->crps_base == doctest::Approx(1.0));
    CHECK(cell->rmse_down == doctest::Approx(std::sqrt(0.5)));
    CHECK(cell->rmse_base == doctest::Approx(1.0));
    CHECK(cell->crpss_defined);
    CHECK(cell->crpss == doctest::Approx(0.25));
    CHECK(cell->rmsess == doctest::Approx(1.0 - std::sqrt(0.5)));
    CHECK(report.skipped_stations == 2);

    const ScoreCell* all = report.find("all", 6.0);
    REQUIRE(all != nullptr);
    CHECK(all->count == 2);

    const std::string csv = report.to_csv();
    CHECK(csv.find("variable,lead_hours,count,") == 0);
    CHECK(csv.find("t2m,6,2,") != std::string::npos);
    CHECK(report.to_json().find("\"crpss\"") != std::string::npos);
}

TEST_CASE("a perfect deterministic forecast leaves the skill score undefined") {
    ScoreAccumulator acc;
    acc.add("t2m", 0.0, {1.5, 2.5}, 2.0, 2.0);  // baseline exactly right
    const ScoreReport report = acc.finalize();
    const ScoreCell* cell = report.find("t2m", 0.0);
    REQUIRE(cell != nullptr);
    CHECK_FALSE(cell->crpss_defined);
    CHECK_FALSE(cell->rmsess_defined);
    // missing scores serialize as empty CSV cells and JSON nulls
    CHECK(report.to_csv().find(",,") != std::string::npos);
    CHECK(report.to_json().find("null") != std::string::npos);
}

TEST_CASE("duplicated baseline as ensemble gives zero skill") {
    Rng rng(4);
    ScoreAccumulator acc;
    for (int i = 0; i < 20; ++i) {
        const double base = rng.normal();
        const double y = rng.normal();
        acc.add("t2m", 0.0, std::vector<double>(16, base), base, y);
    }
    const ScoreReport report = acc.finalize();
    const ScoreCell* cell = report.find("t2m", 0.0);
    REQUIRE(cell != nullptr);
    CHECK(cell->crpss == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cell->rmsess == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("observations CSV round trip") {
    std::vector<Observation> obs;
    obs.push_back({"S0001", 12.5, -3.25, "2025-07-05T06:00:00Z", "t2m", 287.125});
    obs.push_back({"S0002", 2.0, 4.5, "2025-07-05T06:00:00Z", "wind_speed", 5.5});
    const std::string csv = observations_to_csv(obs);
    const auto back = observations_from_csv(csv);
    REQUIRE(back.size() == 2);
    CHECK(back[0].station_id == "S0001");
    CHECK(back[0].lat == 12.5);
    CHECK(back[0].value == 287.125);
    CHECK(back[1].variable == "wind_speed");
    CHECK(observations_to_csv(back) == csv);

    CHECK_THROWS(observations_from_csv("bad,header\n"));
    CHECK_THROWS(observations_from_csv("station_id,lat,lon,valid_time,variable,value\nx,1,2\n"));
}
