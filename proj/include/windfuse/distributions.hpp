#pragma once

#include <map>
#include <string>
#include <vector>

#include "windfuse/types.hpp"

namespace windfuse {

enum class DistFamily { Weibull, Gamma, LogNormal };

std::string to_string(DistFamily f);

// Fitted candidate distribution. params meaning by family:
//   Weibull:   (shape k, scale lambda)
//   Gamma:     (shape alpha, rate beta)   f(x) = beta^alpha/Gamma(alpha) x^(alpha-1) e^(-beta x)
//   LogNormal: (mu, sigma)                mu unconstrained, sigma > 0
struct DistFit {
    DistFamily family = DistFamily::Weibull;
    double p1 = 0.0;
    double p2 = 0.0;
    double loglik = 0.0;
    double ks_stat = 0.0;       // in [0, 1]
    double p95_abs_diff = 0.0;  // m/s, >= 0
};

// --- Weibull closed forms -------------------------------------------------

double weibull_cdf(double w, const WeibullParams& p);

// quantile(p) = lambda * (-ln(1-p))^(1/k). Throws "percentile at upper bound"
// for p >= 1 (callers must clamp; see the plotting-position convention in the
// bias-correction module) and rejects p < 0.
double weibull_quantile(double prob, const WeibullParams& p);

// lambda * Gamma(1 + 1/k)
double weibull_mean(const WeibullParams& p);

// Mean of sqrt(W) for W ~ Weibull(k, lambda). sqrt(W) is itself Weibull with
// shape 2k and scale sqrt(lambda), so this equals
// weibull_mean({2k, sqrt(lambda)}) = sqrt(lambda) * Gamma(1 + 1/(2k)).
double sqrt_weibull_mean(const WeibullParams& p);

// --- Generic family evaluations -------------------------------------------

double dist_cdf(DistFamily f, double p1, double p2, double x);
double dist_logpdf(DistFamily f, double p1, double p2, double x);
double dist_loglik(DistFamily f, double p1, double p2, const std::vector<double>& sample);
// Inverse CDF by safeguarded bracketing (1e-12 relative).
double dist_quantile(DistFamily f, double p1, double p2, double prob);

// Method-of-moments starting estimates (the optimizer's documented start).
std::pair<double, double> method_of_moments(DistFamily f, const std::vector<double>& sample);

// --- Fitting ---------------------------------------------------------------

// Maximum-likelihood fit. Requires sample size >= 10; values must be >= 0 and
// finite; exact zeros are replaced by half the smallest positive value for
// fitting only (anemometer resolution floor). Maximizes the log-likelihood
// from the method-of-moments start; the score equations are solved to a
// log-likelihood gradient norm below 1e-8. Throws "too few observations" and
// "degenerate sample" (all values equal).
DistFit fit_mle(DistFamily family, const std::vector<double>& sample);

// Two-sided KS distance: max over sorted sample of max(i/n - F(x_i),
// F(x_i) - (i-1)/n).
double ks_statistic(const std::vector<double>& sample, const DistFit& fit);

// Empirical quantile with linear interpolation between order statistics
// (type-7 convention).
double empirical_quantile_type7(std::vector<double> sample, double prob);

// --- Model selection --------------------------------------------------------

struct FamilySummary {
    int loglik_wins = 0;
    double mean_ks = 0.0;
    double mean_p95_abs_diff = 0.0;
};

struct SelectionReport {
    std::map<DistFamily, FamilySummary> by_family;
    std::vector<std::string> failed_stations;  // stations where any fit failed
    int n_stations_fitted = 0;
};

// Fits all three families per station, tallies the highest log-likelihood
// (ties broken in fixed order Weibull > Gamma > LogNormal) and averages the
// goodness-of-fit metrics. Stations where any family fails to fit are skipped
// and reported.
SelectionReport select_distribution(
    const std::map<std::string, std::vector<double>>& samples_by_station);

// --- Special functions shared across modules --------------------------------

double normal_cdf(double z);
double normal_pdf(double z);
// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
double digamma(double x);

}  // namespace windfuse
