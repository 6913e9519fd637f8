#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "windfuse/evaluation.hpp"
#include "windfuse/geo.hpp"
#include "windfuse/gp.hpp"
#include "windfuse/rng.hpp"
#include "windfuse/simulation.hpp"

using namespace windfuse;

namespace {

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

GpConfig quick_config(GpVariant variant = GpVariant::Igp) {
    GpConfig cfg;
    cfg.variant = variant;
    cfg.include_x1 = false;
    cfg.estimate_diurnal = false;
    cfg.compute_laplace = false;
    cfg.max_iters = 150;
    cfg.gtol = 1e-3;
    return cfg;
}

}  // namespace

TEST_CASE("evaluation: rmse matches hand computations") {
    CHECK(rmse({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == 0.0);
    CHECK(rmse({3.0, 4.0, 5.0}, {1.0, 2.0, 3.0}) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(rmse({1.0, 2.0, 3.0}, {2.0, 2.0, 5.0}) ==
          doctest::Approx(1.2909944487358056).epsilon(1e-14));
    // Pair order is irrelevant.
    CHECK(rmse({3.0, 1.0, 2.0}, {5.0, 2.0, 2.0}) ==
          doctest::Approx(1.2909944487358056).epsilon(1e-14));
}

TEST_CASE("evaluation: rmse rejects bad input") {
    expect_throw_containing([] { rmse({1.0}, {1.0, 2.0}); }, "length mismatch");
    expect_throw_containing([] { rmse({}, {}); }, "empty");
}

TEST_CASE("evaluation: gaussian crps closed form") {
    // y at the predictive mean, unit sd: 2*pdf(0) - 1/sqrt(pi).
    CHECK(crps_gaussian(0.0, 1.0, 0.0) == doctest::Approx(0.2336949772551091).epsilon(1e-14));

    SUBCASE("positive homogeneity") {
        const double base = crps_gaussian(1.3, 0.7, 2.1);
        for (double c : {0.5, 2.0, 7.3}) {
            CHECK(crps_gaussian(c * 1.3, c * 0.7, c * 2.1) ==
                  doctest::Approx(c * base).epsilon(1e-13));
        }
    }
    SUBCASE("point-mass limit") {
        CHECK(crps_gaussian(2.0, 1e-12, 2.0) < 1e-10);
        // Away from the mean the score tends to the absolute error.
        CHECK(crps_gaussian(2.0, 1e-9, 2.5) == doctest::Approx(0.5).epsilon(1e-6));
    }
    SUBCASE("domain") {
        expect_throw_containing([] { crps_gaussian(0.0, 0.0, 1.0); }, "sd");
        expect_throw_containing([] { crps_gaussian(0.0, -1.0, 1.0); }, "sd");
    }
}

TEST_CASE("evaluation: discretized crps agrees with the closed form") {
    auto std_normal = [](double x) { return norm_cdf(x); };

    SUBCASE("standard case") {
        const double d = crps_discretized(std_normal, 0.0, -8.0, 8.0, 10000);
        CHECK(std::abs(d - 0.2336949772551091) < 1e-3);
    }
    SUBCASE("grid refinement") {
        // y at the mean keeps the indicator jump out of the error budget, so
        // halving the cell width measures the smooth-term convergence alone.
        const double d1 = crps_discretized(std_normal, 0.0, -8.0, 8.0, 10000);
        const double d2 = crps_discretized(std_normal, 0.0, -8.0, 8.0, 20000);
        CHECK(std::abs(d1 - d2) < 1e-4);
    }
    SUBCASE("random predictive distributions") {
        // The midpoint sum misassigns the one cell the indicator jumps in,
        // an O(cell width) error, so the absolute tolerance needs the grid
        // span (16 sigma here) to stay under 10 at M = 1e4.
        GaussianRng rng(99);
        for (int k = 0; k < 200; ++k) {
            const double mu = 2.0 * rng.normal();
            const double sigma = 0.1 + 0.35 * rng.uniform();
            const double y = mu + 4.0 * sigma * (2.0 * rng.uniform() - 1.0);
            const double exact = crps_gaussian(mu, sigma, y);
            CHECK(exact >= 0.0);
            auto cdf = [mu, sigma](double x) { return norm_cdf((x - mu) / sigma); };
            const double d =
                crps_discretized(cdf, y, mu - 8.0 * sigma, mu + 8.0 * sigma, 10000);
            CHECK(std::abs(d - exact) < 1e-3);
        }
    }
    SUBCASE("degenerate step distribution scores zero") {
        auto step = [](double x) { return x >= 0.1 ? 1.0 : 0.0; };
        CHECK(crps_discretized(step, 0.1, -1.0, 1.0, 1000) == 0.0);
    }
    SUBCASE("domain") {
        expect_throw_containing([&] { crps_discretized(std_normal, 0.0, -8.0, 8.0, 50); },
                                "grid");
        expect_throw_containing([&] { crps_discretized(std_normal, 0.0, 8.0, -8.0, 1000); },
                                "range");
        expect_throw_containing([&] { crps_discretized(std_normal, 9.0, -8.0, 8.0, 1000); },
                                "outside");
    }
}

TEST_CASE("evaluation: losocv approaches zero error on a dense quiet network") {
    // 30 nearly noise-free stations packed into a fraction of the field's
    // correlation range: held-out predictions pin the latent value.
    SimulationConfig sim;
    sim.n_met = 30;
    sim.n_pws = 0;
    sim.n_junk = 0;
    sim.box_lat0 = 53.0;
    sim.box_lat1 = 53.8;
    sim.box_lon0 = -8.0;
    sim.box_lon1 = -7.2;
    sim.n_times = 30;
    sim.sigma_met = 0.02;
    sim.seed = 321;
    const GpData d = simulate(sim).to_gp_data();

    LosocvConfig cv;
    cv.refit_per_fold = false;
    cv.rmse_on_ms_scale = false;
    const LosocvResult res = losocv(d, quick_config(), PcPriors::defaults(), cv);
    REQUIRE(res.complete);
    REQUIRE(res.folds.size() == 30);
    for (const auto& f : res.folds) CHECK(f.n_scored == 30);
    CHECK(res.rmse < 0.15);
    CHECK(res.rmse < 0.25 * sim.sigma_z);
    CHECK(res.crps > 0.0);
}

TEST_CASE("evaluation: losocv is deterministic and records folds") {
    SimulationConfig sim;
    sim.n_met = 8;
    sim.n_pws = 4;
    sim.n_junk = 0;
    sim.n_times = 25;
    sim.seed = 77;
    const GpData d = simulate(sim).to_gp_data();

    LosocvConfig cv;
    cv.refit_per_fold = false;
    cv.rmse_on_ms_scale = false;

    const LosocvResult a = losocv(d, quick_config(), PcPriors::defaults(), cv);
    const LosocvResult b = losocv(d, quick_config(), PcPriors::defaults(), cv);
    CHECK(a.rmse == b.rmse);
    CHECK(a.crps == b.crps);
    REQUIRE(a.folds.size() == 8);
    std::set<std::string> fold_ids;
    for (const auto& f : a.folds) {
        CHECK(f.ok);
        fold_ids.insert(f.station_id);
    }
    // Exactly the reference stations, each once.
    CHECK(fold_ids.size() == 8);
    for (int i = 0; i < d.n_sites(); ++i) {
        if (d.cls[static_cast<size_t>(i)] == StationClass::Met)
            CHECK(fold_ids.count(d.ids[static_cast<size_t>(i)]) == 1);
    }

    SUBCASE("per-fold refit matches the cheap mode closely") {
        LosocvConfig full = cv;
        full.refit_per_fold = true;
        const LosocvResult r = losocv(d, quick_config(), PcPriors::defaults(), full);
        CHECK(r.complete);
        // Removing one of eight stations barely moves the hyperparameters.
        CHECK(std::abs(r.rmse - a.rmse) < 0.15);
    }
}

TEST_CASE("evaluation: losocv needs enough held-out stations") {
    SimulationConfig sim;
    sim.n_met = 2;
    sim.n_pws = 5;
    sim.n_junk = 0;
    sim.n_times = 10;
    sim.seed = 5;
    const GpData d = simulate(sim).to_gp_data();
    LosocvConfig cv;
    expect_throw_containing(
        [&] { losocv(d, quick_config(), PcPriors::defaults(), cv); },
        "too few held-out");
}

TEST_CASE("evaluation: grouped nuggets beat dropping the consumer stations") {
    // Fixed clustered network, three paired replicates, consumer noise 0.3.
    StudyConfig st;
    st.base.junk_sd = 0.63;
    st.base.layout = clustered_layout(st.base, 0.35, 424242, &st.base.junk_ids);
    st.noise_levels = {0.3};
    st.variants = {GpVariant::Igp};
    st.strategies = {FitStrategy::ReliableOnly, FitStrategy::Grouped};
    st.reps = 3;

    const auto rows = summarize_study(run_simulation_study(st));
    REQUIRE(rows.size() == 2);
    const StudySummaryRow* rel = nullptr;
    const StudySummaryRow* grp = nullptr;
    for (const auto& r : rows) {
        if (r.strategy == FitStrategy::ReliableOnly) rel = &r;
        if (r.strategy == FitStrategy::Grouped) grp = &r;
    }
    REQUIRE(rel != nullptr);
    REQUIRE(grp != nullptr);
    CHECK(rel->n_ok == 3);
    CHECK(grp->n_ok == 3);
    CHECK(std::abs(grp->rmse - 0.40) < 0.03);
    CHECK(std::abs(rel->rmse - 0.46) < 0.03);
    CHECK(std::abs(grp->crps - 0.22) < 0.02);
    CHECK(std::abs(rel->crps - 0.26) < 0.02);
    CHECK(grp->rmse < rel->rmse);
    CHECK(grp->crps < rel->crps);
}

TEST_CASE("evaluation: extreme metrics score the upper tail of the truth") {
    const int n = 400;
    std::vector<double> truth(n), pred(n);
    for (int i = 0; i < n; ++i) truth[static_cast<size_t>(i)] = 0.01 * i;

    SUBCASE("perfect predictions") {
        pred = truth;
        for (double q : {0.95, 0.975, 0.99}) {
            const auto em = extreme_metrics(pred, truth, q);
            REQUIRE(em.has_value());
            CHECK(em->rmse == 0.0);
            CHECK(em->bias == 0.0);
            CHECK(em->pearson_r == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    SUBCASE("constant underprediction") {
        for (int i = 0; i < n; ++i) pred[static_cast<size_t>(i)] = truth[static_cast<size_t>(i)] - 1.0;
        const auto em = extreme_metrics(pred, truth, 0.95);
        REQUIRE(em.has_value());
        CHECK(em->bias == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(em->rmse == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("subsets are nested") {
        pred = truth;
        const auto e5 = extreme_metrics(pred, truth, 0.95);
        const auto e25 = extreme_metrics(pred, truth, 0.975);
        const auto e1 = extreme_metrics(pred, truth, 0.99);
        REQUIRE((e5 && e25 && e1));
        CHECK(e1->threshold >= e25->threshold);
        CHECK(e25->threshold >= e5->threshold);
        CHECK(e1->n_pairs <= e25->n_pairs);
        CHECK(e25->n_pairs <= e5->n_pairs);
        // Membership is by threshold on truth, so the tighter subset is
        // contained in the looser one.
        for (int i = 0; i < n; ++i) {
            if (truth[static_cast<size_t>(i)] > e1->threshold)
                CHECK(truth[static_cast<size_t>(i)] > e5->threshold);
        }
    }
    SUBCASE("a smooth predictor misses localized spikes") {
        // Truth carries rare spikes the predictor never sees; the top tail is
        // all spikes, so the bias there is negative.
        std::vector<double> t2(1000), p2(1000);
        for (int i = 0; i < 1000; ++i) {
            const double smooth = std::sin(0.05 * i);
            t2[static_cast<size_t>(i)] = smooth + ((i % 37 == 0) ? 3.0 : 0.0);
            p2[static_cast<size_t>(i)] = smooth;
        }
        const auto em = extreme_metrics(p2, t2, 0.99);
        REQUIRE(em.has_value());
        CHECK(em->bias < -1.0);
    }
    SUBCASE("too small a tail is skipped") {
        std::vector<double> t3(100), p3(100);
        for (int i = 0; i < 100; ++i) {
            t3[static_cast<size_t>(i)] = i;
            p3[static_cast<size_t>(i)] = i;
        }
        CHECK(!extreme_metrics(p3, t3, 0.99).has_value());
    }
    SUBCASE("domain") {
        std::vector<double> small(50, 1.0);
        expect_throw_containing([&] { extreme_metrics(small, small, 0.95); }, "too few pairs");
        std::vector<double> a(200, 1.0), b(199, 1.0);
        expect_throw_containing([&] { extreme_metrics(a, b, 0.95); }, "length mismatch");
        expect_throw_containing([&] { extreme_metrics(a, a, 1.0); }, "quantile");
    }
}

TEST_CASE("evaluation: leaving a bad group uncorrected punishes the pooled model") {
    // Same network twice: once honest, once with the unknown-class stations
    // replaced by pure noise.
    // Dense enough that a shortened range cannot soak up the junk: the
    // misfit has to land in the nugget.
    SimulationConfig sim;
    sim.n_met = 12;
    sim.n_pws = 8;
    sim.n_junk = 4;
    sim.n_times = 60;
    sim.sigma_pws = 0.3;
    sim.seed = 2024;
    sim.layout = clustered_layout(sim, 0.35, 11, nullptr);
    sim.junk_ids.clear();  // honest unknown-class stations
    const GpData clean = simulate(sim).to_gp_data();

    GpData dirty = clean;
    GaussianRng junk(777);
    for (int i = 0; i < dirty.n_sites(); ++i) {
        if (dirty.cls[static_cast<size_t>(i)] != StationClass::U) continue;
        for (long t = 0; t < dirty.n_times(); ++t) dirty.y(i, t) = junk.normal();
    }

    LosocvConfig cv;
    cv.refit_per_fold = false;
    cv.rmse_on_ms_scale = false;
    const GroupExperimentResult r =
        uncorrected_group_experiment(clean, dirty, quick_config(), PcPriors::defaults(), cv);

    REQUIRE(r.dirty_grouped.complete);
    REQUIRE(r.dirty_pooled.complete);
    const GpHyperParams& hg = r.dirty_grouped.fit.hyper;
    // The grouped fit isolates the junk in its own nugget.
    CHECK(hg.sigma_for(StationClass::U) / hg.sigma_for(StationClass::Met) > 2.0);
    // The pooled fit can only inflate its one nugget.
    CHECK(r.dirty_pooled.fit.hyper.sigma_for(StationClass::Met) >
          r.clean_pooled.fit.hyper.sigma_for(StationClass::Met));
    // And that inflation costs it more accuracy than the grouped model loses.
    const double pooled_degradation = r.dirty_pooled.rmse - r.clean_pooled.rmse;
    const double grouped_degradation = r.dirty_grouped.rmse - r.clean_grouped.rmse;
    CHECK(pooled_degradation > grouped_degradation);
}
