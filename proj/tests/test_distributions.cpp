#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "windfuse/distributions.hpp"
#include "windfuse/rng.hpp"

using namespace windfuse;

namespace {

std::vector<double> weibull_draws(std::size_t n, double k, double lam, std::uint64_t seed) {
    GaussianRng rng(seed);
    std::vector<double> x(n);
    for (auto& v : x) v = weibull_quantile(rng.uniform(), {k, lam});
    return x;
}

}  // namespace

TEST_CASE("weibull cdf closed forms") {
    CHECK(weibull_cdf(6.0, {2, 6}) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
    CHECK(weibull_cdf(0.0, {2, 6}) == 0.0);
    CHECK(weibull_cdf(9.1045627763108781, {2, 6}) == doctest::Approx(0.9).epsilon(1e-4));
    expect_throw_containing([] { weibull_cdf(-0.1, {2, 6}); }, "negative");
}

TEST_CASE("weibull quantile closed forms and round trip") {
    CHECK(weibull_quantile(0.9, {2, 6}) == doctest::Approx(9.1045627763108781).epsilon(1e-12));
    CHECK(weibull_quantile(0.0, {2, 6}) == 0.0);
    expect_throw_containing([] { weibull_quantile(1.0, {2, 6}); }, "percentile at upper bound");
    expect_throw_containing([] { weibull_quantile(-0.1, {2, 6}); }, "negative");

    GaussianRng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double p = rng.uniform();
        const WeibullParams par{0.5 + 3.0 * rng.uniform(), 0.5 + 8.0 * rng.uniform()};
        CHECK(weibull_cdf(weibull_quantile(p, par), par) == doctest::Approx(p).epsilon(1e-12));
    }

    // Strictly increasing in p; monotone in lambda.
    CHECK(weibull_quantile(0.6, {2, 6}) > weibull_quantile(0.5, {2, 6}));
    CHECK(weibull_quantile(0.5, {2, 7}) > weibull_quantile(0.5, {2, 6}));
}

TEST_CASE("weibull mean") {
    CHECK(weibull_mean({1, 3}) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(weibull_mean({2, 6}) == doctest::Approx(5.3173615527165481).epsilon(1e-12));

    // Monte Carlo agreement.
    const auto x = weibull_draws(1000000, 2, 6, 42);
    double m = 0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    CHECK(m == doctest::Approx(5.3173615527165481).epsilon(0.01 / 5.3));
}

TEST_CASE("sqrt weibull mean and the substitution identity") {
    CHECK(sqrt_weibull_mean({0.5, 4}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(sqrt_weibull_mean({2, 6}) == doctest::Approx(2.2202235703806560).epsilon(1e-12));

    GaussianRng rng(5);
    for (int i = 0; i < 50; ++i) {
        const WeibullParams par{0.3 + 4.0 * rng.uniform(), 0.5 + 9.0 * rng.uniform()};
        const WeibullParams sq{2.0 * par.shape, std::sqrt(par.scale)};
        CHECK(sqrt_weibull_mean(par) == weibull_mean(sq));
    }

    // CDF of sqrt(W) equals the Weibull(2k, sqrt(lambda)) CDF.
    for (int i = 0; i < 20; ++i) {
        const WeibullParams par{0.4 + 3.0 * rng.uniform(), 0.5 + 7.0 * rng.uniform()};
        const WeibullParams sq{2.0 * par.shape, std::sqrt(par.scale)};
        const double x = 0.1 + 3.0 * rng.uniform();
        CHECK(weibull_cdf(x * x, par) == doctest::Approx(weibull_cdf(x, sq)).epsilon(1e-12));
    }

    // Monte Carlo mean of sqrt(W).
    const auto x = weibull_draws(1000000, 2, 6, 43);
    double m = 0;
    for (double v : x) m += std::sqrt(v);
    m /= static_cast<double>(x.size());
    CHECK(m == doctest::Approx(2.2202235703806560).epsilon(0.01 / 2.2));
}

TEST_CASE("ks statistic") {
    DistFit fit;
    fit.family = DistFamily::Weibull;
    fit.p1 = 2.0;
    fit.p2 = 6.0;

    // Sample placed exactly at quantiles of p=(i-0.5)/n.
    const std::size_t n = 10;
    std::vector<double> sample;
    for (std::size_t i = 1; i <= n; ++i)
        sample.push_back(weibull_quantile((static_cast<double>(i) - 0.5) / n, {2, 6}));
    CHECK(ks_statistic(sample, fit) <= 0.5 / n + 1e-12);

    // Whole sample far in the right tail.
    DistFit tail;
    tail.family = DistFamily::Weibull;
    tail.p1 = 2.0;
    tail.p2 = 1.0;
    std::vector<double> far(n, 100.0);
    CHECK(ks_statistic(far, tail) > 0.999);

    // Single point at the median.
    std::vector<double> one{weibull_quantile(0.5, {2, 6})};
    CHECK(ks_statistic(one, fit) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("ks statistic invariant under joint strictly-increasing transforms") {
    auto sample = weibull_draws(500, 1.8, 5.0, 9);
    DistFit fit;
    fit.family = DistFamily::Weibull;
    fit.p1 = 1.8;
    fit.p2 = 5.0;
    const double d1 = ks_statistic(sample, fit);

    // x -> x^2 maps Weibull(k, lam) to Weibull(k/2, lam^2).
    for (auto& v : sample) v = v * v;
    DistFit fit2;
    fit2.family = DistFamily::Weibull;
    fit2.p1 = 0.9;
    fit2.p2 = 25.0;
    CHECK(ks_statistic(sample, fit2) == doctest::Approx(d1).epsilon(1e-12));
}

TEST_CASE("weibull mle recovers parameters from draws") {
    const auto x = weibull_draws(100000, 2.0, 6.0, 1234);
    const DistFit fit = fit_mle(DistFamily::Weibull, x);
    CHECK(fit.p1 == doctest::Approx(2.0).epsilon(0.05 / 2.0));
    CHECK(fit.p2 == doctest::Approx(6.0).epsilon(0.1 / 6.0));
    CHECK(fit.ks_stat < 0.01);

    // Fitted log-likelihood never below the method-of-moments start.
    const auto [k0, l0] = method_of_moments(DistFamily::Weibull, x);
    CHECK(fit.loglik >= dist_loglik(DistFamily::Weibull, k0, l0, x));
}

TEST_CASE("weibull mle satisfies the score equations") {
    const auto x = weibull_draws(2000, 1.4, 4.0, 77);
    const DistFit fit = fit_mle(DistFamily::Weibull, x);
    const double k = fit.p1, lam = fit.p2;
    double gk = static_cast<double>(x.size()) / k, gl = 0.0;
    for (double v : x) {
        const double r = std::pow(v / lam, k), lr = std::log(v / lam);
        gk += lr - r * lr;
        gl += r;
    }
    gl = (k / lam) * (gl - static_cast<double>(x.size()));
    CHECK(std::hypot(gk, gl) <= 1e-8);
}

TEST_CASE("gamma mle: exponential draws give shape near 1") {
    GaussianRng rng(88);
    std::vector<double> x(100000);
    for (auto& v : x) v = -std::log1p(-rng.uniform());  // Exp(1) = Gamma(1, 1)
    const DistFit fit = fit_mle(DistFamily::Gamma, x);
    CHECK(fit.p1 == doctest::Approx(1.0).epsilon(0.05));
    CHECK(fit.p2 == doctest::Approx(1.0).epsilon(0.06));

    const auto [a0, b0] = method_of_moments(DistFamily::Gamma, x);
    CHECK(fit.loglik >= dist_loglik(DistFamily::Gamma, a0, b0, x));

    // Score equations at the optimum.
    const double n = static_cast<double>(x.size());
    double slog = 0.0, s = 0.0;
    for (double v : x) {
        slog += std::log(v);
        s += v;
    }
    const double ga = n * std::log(fit.p2) - n * digamma(fit.p1) + slog;
    const double gb = n * fit.p1 / fit.p2 - s;
    CHECK(std::fabs(ga) / n <= 1e-10);
    CHECK(std::fabs(gb) / n <= 1e-10);
}

TEST_CASE("lognormal mle is the closed form") {
    GaussianRng rng(21);
    std::vector<double> x(5000);
    for (auto& v : x) v = std::exp(1.2 + 0.4 * rng.normal());
    const DistFit fit = fit_mle(DistFamily::LogNormal, x);
    CHECK(fit.p1 == doctest::Approx(1.2).epsilon(0.02));
    CHECK(fit.p2 == doctest::Approx(0.4).epsilon(0.05));
    const auto [m0, s0] = method_of_moments(DistFamily::LogNormal, x);
    CHECK(fit.loglik >= dist_loglik(DistFamily::LogNormal, m0, s0, x));
}

TEST_CASE("fit_mle preconditions and zero handling") {
    expect_throw_containing(
        [] { fit_mle(DistFamily::Weibull, {1, 2, 3, 4, 5}); }, "too few observations");
    expect_throw_containing(
        [] {
            fit_mle(DistFamily::Weibull, std::vector<double>(20, 3.0));
        },
        "degenerate sample");

    // Zeros are replaced by half the smallest positive value, fitting only.
    auto x = weibull_draws(200, 2.0, 6.0, 55);
    auto with_zeros = x;
    with_zeros[3] = 0.0;
    with_zeros[77] = 0.0;
    auto replaced = with_zeros;
    double smallest = 1e300;
    for (double v : replaced)
        if (v > 0) smallest = std::min(smallest, v);
    for (auto& v : replaced)
        if (v == 0.0) v = 0.5 * smallest;
    const DistFit f1 = fit_mle(DistFamily::Weibull, with_zeros);
    const DistFit f2 = fit_mle(DistFamily::Weibull, replaced);
    CHECK(f1.p1 == f2.p1);
    CHECK(f1.p2 == f2.p2);
}

TEST_CASE("empirical quantile type-7") {
    CHECK(empirical_quantile_type7({1, 2, 3, 4}, 0.95) == doctest::Approx(3.85).epsilon(1e-12));
    CHECK(empirical_quantile_type7({4, 1, 3, 2}, 0.0) == 1.0);
    CHECK(empirical_quantile_type7({4, 1, 3, 2}, 1.0) == 4.0);
    CHECK(empirical_quantile_type7({5.0}, 0.5) == 5.0);
}

TEST_CASE("special functions") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-9));
    CHECK(gamma_p(1.0, 2.0) == doctest::Approx(1.0 - std::exp(-2.0)).epsilon(1e-12));
    CHECK(gamma_p(3.5, 0.0) == 0.0);
    CHECK(digamma(1.0) == doctest::Approx(-0.57721566490153286).epsilon(1e-12));
    CHECK(digamma(10.0) == doctest::Approx(2.2517525890667211).epsilon(1e-12));
}

TEST_CASE("dist_quantile inverts dist_cdf") {
    CHECK(dist_quantile(DistFamily::Gamma, 1.0, 0.5, 0.9) ==
          doctest::Approx(-std::log(0.1) / 0.5).epsilon(1e-9));
    for (const auto f : {DistFamily::Gamma, DistFamily::LogNormal}) {
        GaussianRng rng(31);
        for (int i = 0; i < 10; ++i) {
            const double p1 = f == DistFamily::LogNormal ? rng.normal() : 0.5 + 2 * rng.uniform();
            const double p2 = 0.3 + 2 * rng.uniform();
            const double p = 0.05 + 0.9 * rng.uniform();
            const double q = dist_quantile(f, p1, p2, p);
            CHECK(dist_cdf(f, p1, p2, q) == doctest::Approx(p).epsilon(1e-9));
        }
    }
}

TEST_CASE("select_distribution tallies weibull on weibull data") {
    GaussianRng rng(2024);
    std::map<std::string, std::vector<double>> samples;
    for (int s = 0; s < 20; ++s) {
        const double k = 1.5 + rng.uniform();
        const double lam = 4.0 + 4.0 * rng.uniform();
        char id[16];
        std::snprintf(id, sizeof(id), "st%02d", s);
        samples[id] = weibull_draws(500, k, lam, derive_seed(2024, s));
    }
    const SelectionReport rep = select_distribution(samples);
    CHECK(rep.n_stations_fitted == 20);
    CHECK(rep.failed_stations.empty());
    CHECK(rep.by_family.at(DistFamily::Weibull).loglik_wins >= 16);
    CHECK(rep.by_family.at(DistFamily::Weibull).mean_ks <
          rep.by_family.at(DistFamily::LogNormal).mean_ks);

    int total = 0;
    for (const auto& [f, s] : rep.by_family) total += s.loglik_wins;
    CHECK(total == 20);

    // Single station: counts sum to 1.
    std::map<std::string, std::vector<double>> one{{"only", samples.begin()->second}};
    const SelectionReport r1 = select_distribution(one);
    int t1 = 0;
    for (const auto& [f, s] : r1.by_family) t1 += s.loglik_wins;
    CHECK(t1 == 1);
}
