#include "windfuse/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace windfuse {

std::string to_string(DistFamily f) {
    switch (f) {
        case DistFamily::Weibull: return "weibull";
        case DistFamily::Gamma: return "gamma";
        case DistFamily::LogNormal: return "lognormal";
    }
    return "?";
}

// --- special functions ------------------------------------------------------

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / M_SQRT2); }

double digamma(double x) {
    if (x <= 0.0) throw std::domain_error("digamma: x must be positive");
    double r = 0.0;
    while (x < 12.0) {
        r -= 1.0 / x;
        x += 1.0;
    }
    const double x1 = 1.0 / x, x2 = x1 * x1;
    return r + std::log(x) - 0.5 * x1 -
           x2 * (1.0 / 12 -
                 x2 * (1.0 / 120 - x2 * (1.0 / 252 - x2 * (1.0 / 240 - x2 / 132))));
}

static double trigamma(double x) {
    double r = 0.0;
    while (x < 12.0) {
        r += 1.0 / (x * x);
        x += 1.0;
    }
    const double x1 = 1.0 / x, x2 = x1 * x1;
    return r + x1 * (1.0 + x1 * (0.5 + x1 * (1.0 / 6 -
                                             x2 * (1.0 / 30 - x2 * (1.0 / 42 - x2 / 30)))));
}

// Regularized lower incomplete gamma, series + continued fraction split at a+1.
double gamma_p(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw std::domain_error("gamma_p: bad arguments");
    if (x == 0.0) return 0.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        double term = 1.0 / a, sum = term, ap = a;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
        }
        return sum * std::exp(-x + a * std::log(x) - lg);
    }
    // Lentz continued fraction for Q(a, x).
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) break;
    }
    const double q = std::exp(-x + a * std::log(x) - lg) * h;
    return 1.0 - q;
}

// --- Weibull closed forms -----------------------------------------------------

static void check_weibull(const WeibullParams& p) {
    if (!(p.shape > 0.0) || !(p.scale > 0.0) || !std::isfinite(p.shape) ||
        !std::isfinite(p.scale))
        throw std::invalid_argument("invalid Weibull parameters");
}

double weibull_cdf(double w, const WeibullParams& p) {
    check_weibull(p);
    if (w < 0.0) throw std::invalid_argument("weibull_cdf: negative argument");
    if (w == 0.0) return 0.0;
    return -std::expm1(-std::pow(w / p.scale, p.shape));
}

double weibull_quantile(double prob, const WeibullParams& p) {
    check_weibull(p);
    if (prob >= 1.0) throw std::invalid_argument("percentile at upper bound");
    if (prob < 0.0) throw std::invalid_argument("negative percentile");
    if (prob == 0.0) return 0.0;
    return p.scale * std::pow(-std::log1p(-prob), 1.0 / p.shape);
}

double weibull_mean(const WeibullParams& p) {
    check_weibull(p);
    return p.scale * std::exp(std::lgamma(1.0 + 1.0 / p.shape));
}

double sqrt_weibull_mean(const WeibullParams& p) {
    check_weibull(p);
    return std::sqrt(p.scale) * std::exp(std::lgamma(1.0 + 1.0 / (2.0 * p.shape)));
}

// --- generic evaluations ------------------------------------------------------

double dist_cdf(DistFamily f, double p1, double p2, double x) {
    switch (f) {
        case DistFamily::Weibull:
            return x <= 0.0 ? 0.0 : -std::expm1(-std::pow(x / p2, p1));
        case DistFamily::Gamma:
            return x <= 0.0 ? 0.0 : gamma_p(p1, p2 * x);
        case DistFamily::LogNormal:
            return x <= 0.0 ? 0.0 : normal_cdf((std::log(x) - p1) / p2);
    }
    return 0.0;
}

double dist_logpdf(DistFamily f, double p1, double p2, double x) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    const double lx = std::log(x);
    switch (f) {
        case DistFamily::Weibull:
            return std::log(p1) - p1 * std::log(p2) + (p1 - 1.0) * lx -
                   std::pow(x / p2, p1);
        case DistFamily::Gamma:
            return p1 * std::log(p2) - std::lgamma(p1) + (p1 - 1.0) * lx - p2 * x;
        case DistFamily::LogNormal: {
            const double z = (lx - p1) / p2;
            return -std::log(p2) - lx - 0.5 * std::log(2.0 * M_PI) - 0.5 * z * z;
        }
    }
    return 0.0;
}

double dist_loglik(DistFamily f, double p1, double p2, const std::vector<double>& sample) {
    double s = 0.0;
    for (double x : sample) s += dist_logpdf(f, p1, p2, x);
    return s;
}

double dist_quantile(DistFamily f, double p1, double p2, double prob) {
    if (!(prob > 0.0 && prob < 1.0))
        throw std::invalid_argument("dist_quantile: prob must be in (0,1)");
    if (f == DistFamily::Weibull) return weibull_quantile(prob, {p1, p2});
    double lo = 1.0, hi = 1.0;
    for (int i = 0; i < 2000 && dist_cdf(f, p1, p2, lo) > prob; ++i) lo *= 0.5;
    for (int i = 0; i < 2000 && dist_cdf(f, p1, p2, hi) < prob; ++i) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (dist_cdf(f, p1, p2, mid) < prob)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-13 * std::max(1.0, hi)) break;
    }
    return 0.5 * (lo + hi);
}

// --- method of moments ----------------------------------------------------------

static void moments(const std::vector<double>& x, double& mean, double& var) {
    mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
}

std::pair<double, double> method_of_moments(DistFamily f, const std::vector<double>& sample) {
    double mean, var;
    moments(sample, mean, var);
    if (var <= 0.0) throw std::invalid_argument("degenerate sample");
    switch (f) {
        case DistFamily::Weibull: {
            // Justus power-law approximation for the shape from the CV.
            const double cv = std::sqrt(var) / mean;
            double k = std::pow(cv, -1.086);
            k = std::clamp(k, 0.05, 100.0);
            const double lam = mean / std::exp(std::lgamma(1.0 + 1.0 / k));
            return {k, lam};
        }
        case DistFamily::Gamma:
            return {mean * mean / var, mean / var};
        case DistFamily::LogNormal: {
            const double s2 = std::log1p(var / (mean * mean));
            return {std::log(mean) - 0.5 * s2, std::sqrt(s2)};
        }
    }
    throw std::logic_error("unreachable");
}

// --- maximum likelihood -----------------------------------------------------------

namespace {

// Weibull profile score in k. With y = ln x and weights w_i(k) = x_i^k
// (computed shift-stably), the score divided by n is
//   g(k) = 1/k + mean(y) - sum(w y)/sum(w),
// strictly decreasing with a unique root. lambda^k = mean(x^k) at the root.
struct WeibullScore {
    const std::vector<double>& y;
    double ymean;

    void eval(double k, double& g, double& dg) const {
        const std::size_t n = y.size();
        double m = -std::numeric_limits<double>::infinity();
        for (double v : y) m = std::max(m, k * v);
        double a = 0.0, b = 0.0, c = 0.0;
        for (double v : y) {
            const double w = std::exp(k * v - m);
            a += w;
            b += w * v;
            c += w * v * v;
        }
        (void)n;
        const double r1 = b / a, r2 = c / a;
        g = 1.0 / k + ymean - r1;
        dg = -1.0 / (k * k) - (r2 - r1 * r1);
    }

    double log_lambda(double k) const {
        double m = -std::numeric_limits<double>::infinity();
        for (double v : y) m = std::max(m, k * v);
        double a = 0.0;
        for (double v : y) a += std::exp(k * v - m);
        return (m + std::log(a / static_cast<double>(y.size()))) / k;
    }
};

double solve_weibull_shape(const std::vector<double>& y, double k0) {
    WeibullScore sc{y, std::accumulate(y.begin(), y.end(), 0.0) /
                           static_cast<double>(y.size())};
    // Bracket the root around the start.
    double lo = k0, hi = k0, g, dg;
    sc.eval(lo, g, dg);
    if (g > 0) {
        while (g > 0 && hi < 1e4) {
            hi *= 2.0;
            sc.eval(hi, g, dg);
        }
        lo = hi / 2.0;
    } else {
        while (g < 0 && lo > 1e-8) {
            lo *= 0.5;
            sc.eval(lo, g, dg);
        }
        hi = lo * 2.0;
    }
    double k = std::clamp(k0, lo, hi);
    for (int it = 0; it < 100; ++it) {
        sc.eval(k, g, dg);
        if (g > 0)
            lo = k;
        else
            hi = k;
        double step = g / dg;
        double knew = k - step;
        if (!(knew > lo && knew < hi)) knew = 0.5 * (lo + hi);
        if (std::fabs(knew - k) <= 1e-15 * k) {
            k = knew;
            break;
        }
        k = knew;
    }
    return k;
}

double solve_gamma_shape(double s, double a0) {
    double a = a0;
    for (int it = 0; it < 100; ++it) {
        const double f = std::log(a) - digamma(a) - s;
        const double df = 1.0 / a - trigamma(a);
        double anew = a - f / df;
        if (anew <= 0.0) anew = a / 2.0;
        if (std::fabs(anew - a) <= 1e-15 * a) {
            a = anew;
            break;
        }
        a = anew;
    }
    return a;
}

}  // namespace

DistFit fit_mle(DistFamily family, const std::vector<double>& sample) {
    if (sample.size() < 10) throw std::invalid_argument("too few observations");

    double smallest_pos = std::numeric_limits<double>::infinity();
    for (double v : sample) {
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument("sample values must be finite and non-negative");
        if (v > 0.0) smallest_pos = std::min(smallest_pos, v);
    }
    if (!std::isfinite(smallest_pos)) throw std::invalid_argument("degenerate sample");

    // Resolution floor: exact zeros carry no likelihood information for these
    // families; substitute half the smallest positive recorded value. Fitting
    // only; stored data is never modified.
    std::vector<double> x(sample);
    for (double& v : x)
        if (v == 0.0) v = 0.5 * smallest_pos;

    if (*std::max_element(x.begin(), x.end()) == *std::min_element(x.begin(), x.end()))
        throw std::invalid_argument("degenerate sample");

    const auto [m1, m2] = method_of_moments(family, x);

    DistFit fit;
    fit.family = family;
    switch (family) {
        case DistFamily::Weibull: {
            std::vector<double> y(x.size());
            std::transform(x.begin(), x.end(), y.begin(),
                           [](double v) { return std::log(v); });
            const double k = solve_weibull_shape(y, m1);
            fit.p1 = k;
            fit.p2 = std::exp(WeibullScore{y, 0.0}.log_lambda(k));
            break;
        }
        case DistFamily::Gamma: {
            double mean = std::accumulate(x.begin(), x.end(), 0.0) /
                          static_cast<double>(x.size());
            double mlog = 0.0;
            for (double v : x) mlog += std::log(v);
            mlog /= static_cast<double>(x.size());
            const double s = std::log(mean) - mlog;
            const double a = solve_gamma_shape(s, m1);
            fit.p1 = a;
            fit.p2 = a / mean;
            break;
        }
        case DistFamily::LogNormal: {
            double mu = 0.0;
            for (double v : x) mu += std::log(v);
            mu /= static_cast<double>(x.size());
            double s2 = 0.0;
            for (double v : x) {
                const double d = std::log(v) - mu;
                s2 += d * d;
            }
            s2 /= static_cast<double>(x.size());
            fit.p1 = mu;
            fit.p2 = std::sqrt(s2);
            break;
        }
    }

    fit.loglik = dist_loglik(family, fit.p1, fit.p2, x);
    fit.ks_stat = ks_statistic(x, fit);
    fit.p95_abs_diff = std::fabs(empirical_quantile_type7(x, 0.95) -
                                 dist_quantile(family, fit.p1, fit.p2, 0.95));
    return fit;
}

double ks_statistic(const std::vector<double>& sample, const DistFit& fit) {
    if (sample.empty()) throw std::invalid_argument("ks_statistic: empty sample");
    std::vector<double> x(sample);
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = dist_cdf(fit.family, fit.p1, fit.p2, x[i]);
        d = std::max(d, (static_cast<double>(i) + 1.0) / n - f);
        d = std::max(d, f - static_cast<double>(i) / n);
    }
    return d;
}

double empirical_quantile_type7(std::vector<double> sample, double prob) {
    if (sample.empty()) throw std::invalid_argument("empty sample");
    if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("prob out of range");
    std::sort(sample.begin(), sample.end());
    const double h = (static_cast<double>(sample.size()) - 1.0) * prob;
    const std::size_t i = static_cast<std::size_t>(std::floor(h));
    if (i + 1 >= sample.size()) return sample.back();
    const double frac = h - static_cast<double>(i);
    return sample[i] + frac * (sample[i + 1] - sample[i]);
}

SelectionReport select_distribution(
    const std::map<std::string, std::vector<double>>& samples_by_station) {
    static const DistFamily kOrder[] = {DistFamily::Weibull, DistFamily::Gamma,
                                        DistFamily::LogNormal};
    SelectionReport rep;
    for (DistFamily f : kOrder) rep.by_family[f] = FamilySummary{};

    for (const auto& [id, sample] : samples_by_station) {
        std::map<DistFamily, DistFit> fits;
        try {
            for (DistFamily f : kOrder) fits[f] = fit_mle(f, sample);
        } catch (const std::exception&) {
            rep.failed_stations.push_back(id);
            continue;
        }
        ++rep.n_stations_fitted;
        // Ties broken by the fixed family order: strictly-greater replacement.
        DistFamily best = DistFamily::Weibull;
        for (DistFamily f : kOrder)
            if (fits[f].loglik > fits[best].loglik) best = f;
        rep.by_family[best].loglik_wins += 1;
        for (DistFamily f : kOrder) {
            rep.by_family[f].mean_ks += fits[f].ks_stat;
            rep.by_family[f].mean_p95_abs_diff += fits[f].p95_abs_diff;
        }
    }
    if (rep.n_stations_fitted > 0) {
        for (auto& [f, s] : rep.by_family) {
            s.mean_ks /= rep.n_stations_fitted;
            s.mean_p95_abs_diff /= rep.n_stations_fitted;
        }
    }
    return rep;
}

}  // namespace windfuse
