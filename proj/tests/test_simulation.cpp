#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "windfuse/covariance.hpp"
#include "windfuse/geo.hpp"
#include "windfuse/simulation.hpp"

using namespace windfuse;

namespace {

// Spearman rank correlation; average ranks are unnecessary for continuous
// draws.
double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const long n = a.size();
    auto ranks = [n](const Eigen::VectorXd& v) {
        std::vector<long> idx(static_cast<size_t>(n));
        std::iota(idx.begin(), idx.end(), 0L);
        std::sort(idx.begin(), idx.end(), [&v](long i, long j) { return v[i] < v[j]; });
        Eigen::VectorXd r(n);
        for (long k = 0; k < n; ++k) r[idx[static_cast<size_t>(k)]] = static_cast<double>(k);
        return r;
    };
    const Eigen::VectorXd ra = ranks(a);
    const Eigen::VectorXd rb = ranks(b);
    const double ma = ra.mean(), mb = rb.mean();
    const Eigen::VectorXd da = ra.array() - ma;
    const Eigen::VectorXd db = rb.array() - mb;
    return da.dot(db) / std::sqrt(da.squaredNorm() * db.squaredNorm());
}

double lag1_corr(const Eigen::VectorXd& v) {
    const long n = v.size();
    const double m = v.mean();
    double num = 0.0, den = 0.0;
    for (long t = 0; t < n; ++t) {
        const double d = v[t] - m;
        den += d * d;
        if (t + 1 < n) num += d * (v[t + 1] - m);
    }
    return num / den;
}

}  // namespace

TEST_CASE("simulation: identical seeds give identical datasets") {
    SimulationConfig cfg;
    cfg.n_met = 5;
    cfg.n_pws = 3;
    cfg.n_junk = 2;
    cfg.n_times = 40;
    cfg.seed = 9001;
    const SimulatedDataset a = simulate(cfg);
    const SimulatedDataset b = simulate(cfg);
    CHECK((a.z.array() == b.z.array()).all());
    CHECK((a.y.array() == b.y.array()).all());
    REQUIRE(a.stations.size() == b.stations.size());
    for (size_t i = 0; i < a.stations.size(); ++i) {
        CHECK(a.stations[i].id == b.stations[i].id);
        CHECK(a.stations[i].lat == b.stations[i].lat);
        CHECK(a.stations[i].lon == b.stations[i].lon);
    }
    CHECK(a.config.junk_ids == b.config.junk_ids);

    cfg.seed = 9002;
    const SimulatedDataset c = simulate(cfg);
    CHECK(!(a.z.array() == c.z.array()).all());
}

TEST_CASE("simulation: observations are the field plus class noise") {
    SimulationConfig cfg;
    cfg.n_met = 3;
    cfg.n_pws = 2;
    cfg.n_junk = 1;
    cfg.n_times = 10000;
    cfg.mean = 3.0;
    cfg.rho = 0.8;
    cfg.seed = 52;
    const SimulatedDataset s = simulate(cfg);

    for (int i = 0; i < static_cast<int>(s.stations.size()); ++i) {
        const auto& st = s.stations[static_cast<size_t>(i)];
        const Eigen::VectorXd y = s.y.row(i);
        if (s.config.junk_ids.count(st.id)) {
            // Pure noise: no mean shift, unit-ish sd, no trace of the field.
            CHECK(std::abs(y.mean()) < 0.05);
            const Eigen::VectorXd z = s.z.row(i);
            const Eigen::VectorXd dy = y.array() - y.mean();
            const Eigen::VectorXd dz = z.array() - z.mean();
            const double r = dy.dot(dz) / std::sqrt(dy.squaredNorm() * dz.squaredNorm());
            CHECK(std::abs(r) < 0.05);
        } else {
            const Eigen::VectorXd noise = y - s.z.row(i).transpose();
            CHECK(noise.mean() == doctest::Approx(3.0).epsilon(0.01));
            const double sd_target = st.cls == StationClass::Met ? cfg.sigma_met : cfg.sigma_pws;
            const Eigen::VectorXd centered = noise.array() - noise.mean();
            const double sd =
                std::sqrt(centered.squaredNorm() / static_cast<double>(cfg.n_times - 1));
            CHECK(sd == doctest::Approx(sd_target).epsilon(0.05));
        }
    }
}

TEST_CASE("simulation: zero temporal correlation leaves no lag-1 structure") {
    SimulationConfig cfg;
    cfg.n_met = 4;
    cfg.n_pws = 0;
    cfg.n_junk = 0;
    cfg.n_times = 10000;
    cfg.rho = 0.0;
    cfg.seed = 63;
    const SimulatedDataset s = simulate(cfg);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(lag1_corr(s.z.row(i))) < 0.05);
}

TEST_CASE("simulation: field moments match the configuration") {
    // Two stations exactly 200 km apart along a meridian; rho 0 makes every
    // slice an independent draw.
    SimulationConfig cfg;
    cfg.layout = {{"a", 52.0, -8.0, StationClass::Met, {}},
                  {"b", 52.0 + 200.0 * 180.0 / (6371.0 * M_PI), -8.0, StationClass::Met, {}}};
    cfg.n_times = 10000;
    cfg.rho = 0.0;
    cfg.seed = 18;
    const SimulatedDataset s = simulate(cfg);
    REQUIRE(std::abs(haversine_km(s.stations[0].lat, s.stations[0].lon, s.stations[1].lat,
                                  s.stations[1].lon) -
                     200.0) < 0.1);

    for (int i = 0; i < 2; ++i) {
        const Eigen::VectorXd z = s.z.row(i);
        const double var = (z.array() - z.mean()).square().sum() / (z.size() - 1.0);
        CHECK(var == doctest::Approx(0.49).epsilon(0.05));
    }
    const Eigen::VectorXd za = s.z.row(0).array() - s.z.row(0).mean();
    const Eigen::VectorXd zb = s.z.row(1).array() - s.z.row(1).mean();
    const double corr = za.dot(zb) / std::sqrt(za.squaredNorm() * zb.squaredNorm());
    // Separation equals the range parameter, where the correlation is
    // sqrt(8)*K1(sqrt(8)).
    CHECK(std::abs(corr - 0.139667) < 0.03);
}

TEST_CASE("simulation: junk stations are uncorrelated with the network") {
    SimulationConfig cfg;
    cfg.n_met = 3;
    cfg.n_pws = 2;
    cfg.n_junk = 2;
    cfg.n_times = 10000;
    cfg.seed = 74;
    const SimulatedDataset s = simulate(cfg);
    std::vector<int> junk, other;
    for (int i = 0; i < static_cast<int>(s.stations.size()); ++i) {
        if (s.config.junk_ids.count(s.stations[static_cast<size_t>(i)].id))
            junk.push_back(i);
        else
            other.push_back(i);
    }
    REQUIRE(junk.size() == 2);
    for (int j : junk) {
        const Eigen::VectorXd yj = s.y.row(j);
        const double sd = std::sqrt((yj.array() - yj.mean()).square().sum() / (yj.size() - 1.0));
        CHECK(sd == doctest::Approx(cfg.junk_sd).epsilon(0.05));
        for (int i = 0; i < static_cast<int>(s.stations.size()); ++i) {
            if (i == j) continue;
            CHECK(std::abs(spearman(yj, s.y.row(i))) < 0.1);
        }
    }
}

TEST_CASE("simulation: time recursion reproduces the separable covariance") {
    // Four sites, three times, 1e5 replications: every entry of the
    // empirical second-moment matrix sits within three standard errors of
    // the Kronecker product it should have.
    SimulationConfig cfg;
    cfg.layout = {{"a", 52.0, -8.0, StationClass::Met, {}},
                  {"b", 52.9, -7.6, StationClass::Met, {}},
                  {"c", 53.6, -8.8, StationClass::Met, {}},
                  {"d", 52.4, -6.9, StationClass::Met, {}}};
    cfg.n_times = 3;
    cfg.rho = 0.8;

    const int n = 4;
    const long t_len = 3;
    const int reps = 100000;
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(n * t_len, n * t_len);
    Eigen::VectorXd v(n * t_len);
    for (int r = 0; r < reps; ++r) {
        cfg.seed = 100000ULL + static_cast<std::uint64_t>(r);
        const SimulatedDataset s = simulate(cfg);
        for (long t = 0; t < t_len; ++t)
            for (int i = 0; i < n; ++i) v[t * n + i] = s.z(i, t);
        second += v * v.transpose();
    }
    second /= static_cast<double>(reps);

    Eigen::MatrixXd dist(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            dist(i, j) = haversine_km(cfg.layout[static_cast<size_t>(i)].lat,
                                      cfg.layout[static_cast<size_t>(i)].lon,
                                      cfg.layout[static_cast<size_t>(j)].lat,
                                      cfg.layout[static_cast<size_t>(j)].lon);
    const Eigen::MatrixXd cs = spatial_covariance(dist, cfg.phi, cfg.sigma_z);
    Eigen::MatrixXd ct(t_len, t_len);
    for (long a = 0; a < t_len; ++a)
        for (long b = 0; b < t_len; ++b) ct(a, b) = std::pow(cfg.rho, std::abs(a - b));

    for (long a = 0; a < n * t_len; ++a) {
        for (long b = 0; b < n * t_len; ++b) {
            const double target = ct(a / n, b / n) * cs(a % n, b % n);
            const double var_a = ct(a / n, a / n) * cs(a % n, a % n);
            const double var_b = ct(b / n, b / n) * cs(b % n, b % n);
            const double se =
                std::sqrt((var_a * var_b + target * target) / static_cast<double>(reps));
            CHECK(std::abs(second(a, b) - target) < 3.0 * se);
        }
    }
}

TEST_CASE("simulation: generated layout fills the box with the right roster") {
    SimulationConfig cfg;
    cfg.seed = 4;
    const SimulatedDataset s = simulate(cfg);
    REQUIRE(s.stations.size() == 49);
    int met = 0, pws = 0, junk = 0;
    std::set<std::string> ids;
    for (const auto& st : s.stations) {
        ids.insert(st.id);
        CHECK(st.lat >= cfg.box_lat0);
        CHECK(st.lat <= cfg.box_lat1);
        CHECK(st.lon >= cfg.box_lon0);
        CHECK(st.lon <= cfg.box_lon1);
        if (st.cls == StationClass::Met) ++met;
        if (st.cls == StationClass::A) ++pws;
        if (st.cls == StationClass::U) ++junk;
    }
    CHECK(met == 23);
    CHECK(pws == 19);
    CHECK(junk == 7);
    CHECK(ids.size() == 49);
    CHECK(s.config.junk_ids.size() == 7);
    for (const auto& st : s.stations) {
        if (st.cls == StationClass::U)
            CHECK(s.config.junk_ids.count(st.id) == 1);
        else
            CHECK(s.config.junk_ids.count(st.id) == 0);
    }
    // The echoed config can regenerate the dataset as-is.
    const SimulatedDataset again = simulate(s.config);
    CHECK((again.z.array() == s.z.array()).all());
    CHECK((again.y.array() == s.y.array()).all());
}

TEST_CASE("simulation: clustered layout pulls consumers toward references") {
    SimulationConfig cfg;
    std::set<std::string> junk_ids;
    const auto layout = clustered_layout(cfg, 0.35, 424242, &junk_ids);
    REQUIRE(layout.size() == 49);
    CHECK(junk_ids.size() == 7);

    std::vector<const StationRecord*> mets;
    int cls_counts[5] = {0, 0, 0, 0, 0};
    for (const auto& st : layout) {
        ++cls_counts[static_cast<int>(st.cls)];
        CHECK(st.lat >= cfg.box_lat0);
        CHECK(st.lat <= cfg.box_lat1);
        CHECK(st.lon >= cfg.box_lon0);
        CHECK(st.lon <= cfg.box_lon1);
        if (st.cls == StationClass::Met) mets.push_back(&st);
    }
    CHECK(cls_counts[static_cast<int>(StationClass::Met)] == 23);
    // Consumer classes cycle A, B, C.
    CHECK(cls_counts[static_cast<int>(StationClass::A)] == 7);
    CHECK(cls_counts[static_cast<int>(StationClass::B)] == 6);
    CHECK(cls_counts[static_cast<int>(StationClass::C)] == 6);
    CHECK(cls_counts[static_cast<int>(StationClass::U)] == 7);

    auto nearest_met_km = [&mets](const StationRecord& st) {
        double best = 1e30;
        for (const auto* m : mets)
            best = std::min(best, haversine_km(st.lat, st.lon, m->lat, m->lon));
        return best;
    };
    int within = 0, consumers = 0;
    for (const auto& st : layout) {
        if (st.cls == StationClass::A || st.cls == StationClass::B ||
            st.cls == StationClass::C) {
            ++consumers;
            if (nearest_met_km(st) < 60.0) ++within;
        }
    }
    // A 0.35-degree offset keeps most consumers inside 60 km of a reference.
    CHECK(consumers == 19);
    CHECK(within >= 13);

    // Same seed, same layout; the draw is independent of the junk-id sink.
    const auto again = clustered_layout(cfg, 0.35, 424242, nullptr);
    REQUIRE(again.size() == layout.size());
    for (size_t i = 0; i < layout.size(); ++i) {
        CHECK(again[i].lat == layout[i].lat);
        CHECK(again[i].lon == layout[i].lon);
    }

    expect_throw_containing(
        [&] {
            SimulationConfig bad;
            bad.n_met = 0;
            clustered_layout(bad, 0.35, 1, nullptr);
        },
        "reference");
    expect_throw_containing([&] { clustered_layout(cfg, -0.1, 1, nullptr); }, "offset");
}

TEST_CASE("simulation: config validation") {
    SimulationConfig cfg;
    cfg.n_met = 3;
    cfg.n_pws = 0;
    cfg.n_junk = 0;
    cfg.n_times = 1;
    expect_throw_containing([&] { simulate(cfg); }, "too few times");
    cfg.n_times = 10;
    cfg.rho = 1.0;
    expect_throw_containing([&] { simulate(cfg); }, "rho");
    cfg.rho = 0.8;
    cfg.sigma_met = -0.1;
    expect_throw_containing([&] { simulate(cfg); }, "negative noise");
    cfg.sigma_met = 0.2;
    cfg.phi = 0.0;
    expect_throw_containing([&] { simulate(cfg); }, "hyperparameters");
    cfg.phi = 200.0;
    cfg.junk_ids = {"nobody"};
    cfg.layout = {{"a", 52.0, -8.0, StationClass::Met, {}},
                  {"b", 53.0, -8.0, StationClass::Met, {}}};
    expect_throw_containing([&] { simulate(cfg); }, "unknown station");
}

TEST_CASE("simulation: study runner pairs strategies over shared replicates") {
    StudyConfig st;
    st.base.n_met = 6;
    st.base.n_pws = 4;
    st.base.n_junk = 2;
    st.base.n_times = 30;
    st.noise_levels = {0.4};
    st.variants = {GpVariant::Igp};
    st.reps = 2;
    st.seed = 33;

    const auto cells = run_simulation_study(st);
    REQUIRE(cells.size() == 6);  // 1 level x 1 variant x 3 strategies x 2 reps
    for (const auto& c : cells) {
        CHECK(c.ok);
        CHECK(std::isfinite(c.rmse));
        CHECK(std::isfinite(c.crps));
        CHECK(c.crps > 0.0);
    }

    const auto rows = summarize_study(cells);
    REQUIRE(rows.size() == 3);
    std::set<FitStrategy> seen;
    for (const auto& r : rows) {
        seen.insert(r.strategy);
        CHECK(r.n_ok == 2);
        CHECK(r.n_total == 2);
        CHECK(std::isfinite(r.rmse));
        CHECK(std::isnan(r.rho));  // IGP summaries carry no rho
        if (r.strategy != FitStrategy::Grouped) {
            // One shared nugget: the per-class echo repeats it.
            CHECK(r.sd_met == r.sd_pws);
            CHECK(r.sd_pws == r.sd_junk);
        } else {
            CHECK(r.sd_junk > r.sd_met);
        }
    }
    CHECK(seen.size() == 3);

    // Bitwise repeatability of the whole grid.
    const auto cells2 = run_simulation_study(st);
    REQUIRE(cells2.size() == cells.size());
    for (size_t i = 0; i < cells.size(); ++i) {
        CHECK(cells[i].rmse == cells2[i].rmse);
        CHECK(cells[i].crps == cells2[i].crps);
        CHECK(cells[i].hyper.phi == cells2[i].hyper.phi);
    }
}

TEST_CASE("simulation: strategy names round-trip") {
    for (FitStrategy s :
         {FitStrategy::ReliableOnly, FitStrategy::Pooled, FitStrategy::Grouped}) {
        CHECK(fit_strategy_from_string(to_string(s)) == s);
    }
    expect_throw_containing([] { fit_strategy_from_string("bogus"); }, "unknown fit strategy");
}
