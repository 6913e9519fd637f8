#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "windfuse/qc.hpp"
#include "windfuse/rng.hpp"

using namespace windfuse;

namespace {

StationRecord station(const std::string& id, double lat, double lon,
                      StationClass c = StationClass::B) {
    StationRecord s;
    s.id = id;
    s.lat = lat;
    s.lon = lon;
    s.cls = c;
    return s;
}

WindSeries series_of(const std::string& id, std::vector<std::optional<double>> v) {
    return WindSeries{id, 0, std::move(v)};
}

}  // namespace

TEST_CASE("missing data filter thresholds") {
    std::vector<std::optional<double>> v(100, 1.0);
    for (int i = 0; i < 5; ++i) v[i] = std::nullopt;
    auto r = missing_data_filter(series_of("s", v));
    CHECK(r.passed);
    CHECK(r.frac_present == doctest::Approx(0.95));

    for (int i = 5; i < 11; ++i) v[i] = std::nullopt;
    r = missing_data_filter(series_of("s", v));
    CHECK_FALSE(r.passed);
    CHECK(r.frac_present == doctest::Approx(0.89));

    r = missing_data_filter(series_of("s", std::vector<std::optional<double>>(10)));
    CHECK_FALSE(r.passed);
    CHECK(r.frac_present == 0.0);
}

TEST_CASE("rank transform") {
    auto r = rank_transform(series_of("s", {3.0, 1.0, 2.0}));
    CHECK(*r[0] == doctest::Approx(1.0));
    CHECK(*r[1] == doctest::Approx(1.0 / 3));
    CHECK(*r[2] == doctest::Approx(2.0 / 3));

    // Ties take the average rank.
    r = rank_transform(series_of("s", {1.0, 1.0, 2.0}));
    CHECK(*r[0] == doctest::Approx(0.5));
    CHECK(*r[1] == doctest::Approx(0.5));
    CHECK(*r[2] == doctest::Approx(1.0));

    // Missing preserved; monotone transforms leave ranks unchanged.
    auto rm = rank_transform(series_of("s", {3.0, std::nullopt, 1.0, 2.0}));
    CHECK_FALSE(rm[1].has_value());
    CHECK(*rm[0] == doctest::Approx(1.0));
    auto rsq = rank_transform(series_of("s", {9.0, std::nullopt, 1.0, 4.0}));
    for (std::size_t i = 0; i < rm.size(); ++i) CHECK(rm[i] == rsq[i]);

    expect_throw_containing(
        [] { rank_transform(series_of("s", {2.0, 2.0, 2.0})); }, "degenerate ranks");
    expect_throw_containing(
        [] { rank_transform(series_of("s", {2.0})); }, "too few");
}

TEST_CASE("spearman correlation") {
    GaussianRng rng(17);
    std::vector<std::optional<double>> a(200), b(200), c(200);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = rng.uniform() * 5.0;
        a[i] = x;
        b[i] = x * x;       // monotone map of a
        c[i] = -*a[i];      // antitone
    }
    const auto sa = series_of("a", a), sb = series_of("b", b), sc = series_of("c", c);
    CHECK(spearman(sa, sb) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spearman(sa, sc) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(spearman(sa, sb) == doctest::Approx(spearman(sb, sa)));

    // Independent noise has correlation near zero.
    std::vector<std::optional<double>> u(10000), w(10000);
    for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] = rng.normal();
        w[i] = rng.normal();
    }
    CHECK(std::fabs(spearman(series_of("u", u), series_of("w", w))) < 0.05);

    expect_throw_containing(
        [&] {
            spearman(series_of("a", {1.0, 2.0}), series_of("b", {1.0, 2.0}));
        },
        "insufficient overlap");
    // Overlap misaligned in time: a covers hours 0..3, b covers 10..13.
    expect_throw_containing(
        [&] {
            WindSeries late{"b", 10, {1.0, 2.0, 3.0, 4.0}};
            spearman(series_of("a", {1.0, 2.0, 3.0, 4.0}), late);
        },
        "insufficient overlap");
}

TEST_CASE("neighbour filter flags uncorrelated stations") {
    // Nine correlated stations sharing a latent signal plus one junk station.
    GaussianRng rng(99);
    const std::size_t T = 400;
    std::vector<double> signal(T);
    for (auto& v : signal) v = 5.0 + 2.0 * rng.normal();

    std::vector<StationRecord> st;
    std::vector<WindSeries> series;
    for (int i = 0; i < 9; ++i) {
        const std::string id = "pws_" + std::to_string(i);
        st.push_back(station(id, 53.0 + 0.05 * i, -8.0, StationClass::B));
        std::vector<std::optional<double>> v(T);
        for (std::size_t t = 0; t < T; ++t)
            v[t] = std::max(0.0, signal[t] + 0.3 * rng.normal());
        series.push_back(series_of(id, std::move(v)));
    }
    st.push_back(station("junk", 53.2, -8.01, StationClass::U));
    std::vector<std::optional<double>> junk(T);
    for (auto& v : junk) v = std::max(0.0, 5.0 + 2.0 * rng.normal());
    series.push_back(series_of("junk", std::move(junk)));

    Dataset ds = validate_dataset(st, series);
    auto reports = neighbour_filter(ds);
    REQUIRE(reports.size() == 10);
    int fails = 0;
    for (const auto& rep : reports) {
        CHECK(rep.passed == rep.fail_reasons.empty());
        if (!rep.passed) {
            ++fails;
            CHECK(rep.station_id == "junk");
        }
    }
    CHECK(fails == 1);

    // Idempotence: after dropping the junk station nothing more is removed.
    st.pop_back();
    series.pop_back();
    Dataset clean = validate_dataset(st, series);
    for (const auto& rep : neighbour_filter(clean)) CHECK(rep.passed);

    // Met stations are exempt even when uncorrelated.
    st.push_back(station("met_junk", 53.2, -8.01, StationClass::Met));
    std::vector<std::optional<double>> mj(T);
    GaussianRng rng2(5);
    for (auto& v : mj) v = std::max(0.0, 5.0 + 2.0 * rng2.normal());
    series.push_back(series_of("met_junk", std::move(mj)));
    for (const auto& rep : neighbour_filter(validate_dataset(st, series)))
        CHECK(rep.passed);
}

TEST_CASE("neighbour filter requires enough candidates") {
    std::vector<StationRecord> st;
    std::vector<WindSeries> series;
    for (int i = 0; i < 4; ++i) {
        const std::string id = "s" + std::to_string(i);
        st.push_back(station(id, 53.0 + 0.1 * i, -8.0));
        series.push_back(series_of(id, {1.0, 2.0, 3.0}));
    }
    expect_throw_containing(
        [&] { neighbour_filter(validate_dataset(st, series)); }, "insufficient neighbours");
}

TEST_CASE("correlation vs distance rows") {
    GaussianRng rng(7);
    std::vector<std::optional<double>> a(50), b(50);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = rng.uniform() * 4.0;
        b[i] = a[i];
    }
    Dataset ds = validate_dataset(
        {station("x", 53, -8, StationClass::Met), station("y", 53, -8, StationClass::B)},
        {series_of("x", a), series_of("y", b)});
    auto rows = correlation_vs_distance(ds);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].distance_km == 0.0);
    CHECK(rows[0].spearman_rho == doctest::Approx(1.0));
    CHECK(rows[0].pearson_r == doctest::Approx(1.0));

    // Class filter removes non-matching pairs.
    auto none = correlation_vs_distance(
        ds, false, std::make_pair(StationClass::A, StationClass::A));
    CHECK(none.empty());

    // Increment mode drops one hour and still correlates perfectly here.
    auto inc = correlation_vs_distance(ds, true);
    REQUIRE(inc.size() == 1);
    CHECK(inc[0].pearson_r == doctest::Approx(1.0));
}
