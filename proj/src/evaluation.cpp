#include "windfuse/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace windfuse {

namespace {

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

double type7_quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const size_t lo = static_cast<size_t>(std::floor(h));
    const size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - std::floor(h)) * (v[hi] - v[lo]);
}

}  // namespace

double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size()) throw std::invalid_argument("length mismatch");
    if (pred.empty()) throw std::invalid_argument("empty input");
    double sse = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - truth[i];
        sse += e * e;
    }
    return std::sqrt(sse / static_cast<double>(pred.size()));
}

double crps_gaussian(double mean, double sd, double y) {
    if (!(sd > 0.0)) throw std::invalid_argument("non-positive predictive sd");
    const double z = (y - mean) / sd;
    return sd * (z * (2.0 * norm_cdf(z) - 1.0) + 2.0 * norm_pdf(z) - 1.0 / std::sqrt(M_PI));
}

double crps_discretized(const std::function<double(double)>& cdf, double y, double lo, double hi,
                        int m) {
    if (m < 100) throw std::invalid_argument("too few grid points");
    if (!(hi > lo)) throw std::invalid_argument("invalid integration range");
    if (!(lo < y && y < hi)) throw std::invalid_argument("evaluation point outside grid");
    const double dx = (hi - lo) / m;
    double acc = 0.0;
    for (int j = 0; j < m; ++j) {
        const double x = lo + (j + 0.5) * dx;
        const double step = (x >= y) ? 1.0 : 0.0;
        const double d = cdf(x) - step;
        acc += d * d;
    }
    return acc * dx;
}

LosocvResult losocv(const GpData& data, const GpConfig& config, const PcPriors& priors,
                    const LosocvConfig& cv) {
    std::vector<int> held;
    for (int i = 0; i < data.n_sites(); ++i)
        if (data.cls[static_cast<size_t>(i)] == cv.held_out) held.push_back(i);
    if (held.size() < 3) throw std::invalid_argument("too few held-out stations");

    LosocvResult res;
    res.fit = fit_gp(data, config, priors);

    double sse = 0.0, crps_sum = 0.0;
    long n_tot = 0;
    bool all_ok = true;
    for (int m : held) {
        FoldScore fs;
        fs.station_id = data.ids[static_cast<size_t>(m)];
        try {
            const GpData reduced = data.without_site(m);
            ModelFit fm;
            if (cv.refit_per_fold) {
                fm = fit_gp(reduced, config, priors);
            } else {
                fm = res.fit;
                fm.fixed = estimate_fixed_effects(res.fit.hyper, reduced, config);
            }
            std::vector<long> times;
            std::vector<double> truth_sqrt;
            for (long t = 0; t < data.n_times(); ++t) {
                const double v = data.y(m, t);
                if (!std::isnan(v)) {
                    times.push_back(t);
                    truth_sqrt.push_back(v);
                }
            }
            if (times.empty()) {
                fs.ok = true;
                res.folds.push_back(fs);
                continue;
            }
            const PredictionTarget tg{data.lat[static_cast<size_t>(m)],
                                      data.lon[static_cast<size_t>(m)], data.x1[m]};
            const auto preds = predict_gp(fm, reduced, {tg}, times);
            double fold_sse = 0.0, fold_crps = 0.0;
            for (size_t j = 0; j < times.size(); ++j) {
                const auto& pr = preds[j];
                const double err = cv.rmse_on_ms_scale
                                       ? pr.mean_ms - truth_sqrt[j] * truth_sqrt[j]
                                       : pr.mean_sqrt - truth_sqrt[j];
                fold_sse += err * err;
                fold_crps +=
                    crps_gaussian(pr.mean_sqrt, std::max(pr.sd_sqrt, 1e-12), truth_sqrt[j]);
            }
            const double nf = static_cast<double>(times.size());
            fs.n_scored = static_cast<long>(times.size());
            fs.rmse = std::sqrt(fold_sse / nf);
            fs.crps = fold_crps / nf;
            fs.ok = true;
            sse += fold_sse;
            crps_sum += fold_crps;
            n_tot += fs.n_scored;
        } catch (const std::exception& e) {
            fs.ok = false;
            fs.error = e.what();
            all_ok = false;
        }
        res.folds.push_back(fs);
    }
    res.complete = all_ok;
    if (n_tot > 0) {
        res.rmse = std::sqrt(sse / static_cast<double>(n_tot));
        res.crps = crps_sum / static_cast<double>(n_tot);
    } else {
        res.rmse = std::numeric_limits<double>::quiet_NaN();
        res.crps = std::numeric_limits<double>::quiet_NaN();
    }
    return res;
}

std::optional<ExtremeMetrics> extreme_metrics(const std::vector<double>& pred,
                                              const std::vector<double>& truth, double quantile) {
    if (pred.size() != truth.size()) throw std::invalid_argument("length mismatch");
    if (pred.size() < 100) throw std::invalid_argument("too few pairs");
    if (!(quantile > 0.0 && quantile < 1.0)) throw std::invalid_argument("invalid quantile");
    ExtremeMetrics em;
    em.threshold = type7_quantile(truth, quantile);
    std::vector<double> p_sub, t_sub;
    for (size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] > em.threshold) {
            p_sub.push_back(pred[i]);
            t_sub.push_back(truth[i]);
        }
    }
    em.n_pairs = static_cast<long>(t_sub.size());
    if (em.n_pairs < 3) return std::nullopt;
    const double n = static_cast<double>(em.n_pairs);
    double sse = 0.0, bias = 0.0, mp = 0.0, mt = 0.0;
    for (size_t i = 0; i < t_sub.size(); ++i) {
        const double e = p_sub[i] - t_sub[i];
        sse += e * e;
        bias += e;
        mp += p_sub[i];
        mt += t_sub[i];
    }
    em.rmse = std::sqrt(sse / n);
    em.bias = bias / n;
    mp /= n;
    mt /= n;
    double spt = 0.0, spp = 0.0, stt = 0.0;
    for (size_t i = 0; i < t_sub.size(); ++i) {
        spt += (p_sub[i] - mp) * (t_sub[i] - mt);
        spp += (p_sub[i] - mp) * (p_sub[i] - mp);
        stt += (t_sub[i] - mt) * (t_sub[i] - mt);
    }
    // Constant subsets leave the correlation undefined.
    em.pearson_r = (spp > 0.0 && stt > 0.0) ? spt / std::sqrt(spp * stt)
                                            : std::numeric_limits<double>::quiet_NaN();
    return em;
}

GroupExperimentResult uncorrected_group_experiment(const GpData& clean, const GpData& dirty,
                                                   const GpConfig& base, const PcPriors& priors,
                                                   const LosocvConfig& cv) {
    GpConfig pooled = base;
    pooled.class_group = {0, 0, 0, 0, 0};
    GroupExperimentResult r;
    r.clean_pooled = losocv(clean, pooled, priors, cv);
    r.clean_grouped = losocv(clean, base, priors, cv);
    r.dirty_pooled = losocv(dirty, pooled, priors, cv);
    r.dirty_grouped = losocv(dirty, base, priors, cv);
    return r;
}

}  // namespace windfuse
