#include "windfuse/bias.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "windfuse/distributions.hpp"
#include "windfuse/geo.hpp"

namespace windfuse {

namespace {

constexpr double kExactHitKm = 0.001;

void check_params(const WeibullParams& p) {
    if (!(p.shape > 0.0) || !std::isfinite(p.shape)) throw std::invalid_argument("invalid shape parameter");
    if (!(p.scale > 0.0) || !std::isfinite(p.scale)) throw std::invalid_argument("invalid scale parameter");
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const size_t n = a.size();
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (size_t i = 0; i < n; ++i) {
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
        sab += (a[i] - ma) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

struct Ols2 {
    double beta0, beta1, sigma;
};

// y ~ beta0 + beta1 x, residual sd with denominator n - 2.
Ols2 ols_simple(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0) throw std::invalid_argument("degenerate design");
    Ols2 r;
    r.beta1 = sxy / sxx;
    r.beta0 = my - r.beta1 * mx;
    double rss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double e = y[i] - r.beta0 - r.beta1 * x[i];
        rss += e * e;
    }
    r.sigma = n > 2 ? std::sqrt(rss / static_cast<double>(n - 2)) : 0.0;
    return r;
}

}  // namespace

void validate_grid(const GridParamField& field) {
    if (field.points.empty()) throw std::invalid_argument("empty parameter grid");
    for (const auto& p : field.points) {
        if (p.lat < -90.0 || p.lat > 90.0 || p.lon < -180.0 || p.lon > 180.0 ||
            !std::isfinite(p.lat) || !std::isfinite(p.lon))
            throw std::invalid_argument("coordinates out of range");
        check_params(p.params);
    }
    std::vector<std::pair<double, double>> coords;
    coords.reserve(field.points.size());
    for (const auto& p : field.points) coords.emplace_back(p.lon, p.lat);
    std::sort(coords.begin(), coords.end());
    if (std::adjacent_find(coords.begin(), coords.end()) != coords.end())
        throw std::invalid_argument("duplicate grid coordinates");
}

WeibullParams idw_interpolate(const GridParamField& field, double lat, double lon, double power,
                              int k_nearest) {
    if (field.points.empty()) throw std::invalid_argument("empty parameter grid");
    if (!(power > 0.0)) throw std::invalid_argument("power must be positive");
    if (k_nearest < 1) throw std::invalid_argument("k_nearest must be at least 1");

    const size_t n = field.points.size();
    std::vector<double> dist(n);
    for (size_t i = 0; i < n; ++i) {
        dist[i] = haversine_km(lat, lon, field.points[i].lat, field.points[i].lon);
        if (dist[i] < kExactHitKm) return field.points[i].params;
    }
    const size_t k = std::min(static_cast<size_t>(k_nearest), n);
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](size_t a, size_t b) { return dist[a] < dist[b]; });

    double wsum = 0.0, shape = 0.0, scale = 0.0;
    for (size_t j = 0; j < k; ++j) {
        const size_t i = idx[j];
        const double w = std::pow(dist[i], -power);
        wsum += w;
        shape += w * field.points[i].params.shape;
        scale += w * field.points[i].params.scale;
    }
    return WeibullParams{shape / wsum, scale / wsum};
}

ShapeCalibration fit_shape_calibration(const std::vector<CalibRow>& rows) {
    if (rows.size() < 3) throw std::invalid_argument("too few calibration rows");
    std::vector<double> x, y;
    x.reserve(rows.size());
    y.reserve(rows.size());
    for (const auto& r : rows) {
        x.push_back(r.grid.shape);
        y.push_back(r.fitted.shape);
    }
    const Ols2 o = ols_simple(x, y);
    ShapeCalibration c;
    c.beta0 = o.beta0;
    c.beta1 = o.beta1;
    c.sigma = o.sigma;
    c.n = static_cast<int>(rows.size());
    return c;
}

std::string to_string(ScaleModelKind kind) {
    switch (kind) {
        case ScaleModelKind::Identity: return "identity";
        case ScaleModelKind::Linear: return "linear";
        case ScaleModelKind::LinearDist: return "linear+dist";
        case ScaleModelKind::Spline: return "spline";
        case ScaleModelKind::SplineDist: return "spline+dist";
    }
    throw std::logic_error("unreachable");
}

ScaleModelKind scale_model_from_string(const std::string& s) {
    if (s == "identity") return ScaleModelKind::Identity;
    if (s == "linear") return ScaleModelKind::Linear;
    if (s == "linear+dist") return ScaleModelKind::LinearDist;
    if (s == "spline") return ScaleModelKind::Spline;
    if (s == "spline+dist") return ScaleModelKind::SplineDist;
    throw std::invalid_argument("unknown scale model: " + s);
}

double ScaleCalibration::predict(double grid_scale, double dist_to_sea_km) const {
    switch (kind) {
        case ScaleModelKind::Identity: return grid_scale;
        case ScaleModelKind::Linear: return beta0 + beta1 * grid_scale;
        case ScaleModelKind::LinearDist:
            return beta0 + beta1 * grid_scale + beta_dist * dist_to_sea_km;
        case ScaleModelKind::Spline: return fit.predict(grid_scale);
        case ScaleModelKind::SplineDist: {
            Eigen::VectorXd e(1);
            e(0) = dist_to_sea_km;
            return fit.predict(grid_scale, e);
        }
    }
    throw std::logic_error("unreachable");
}

ScaleCalibration fit_scale_calibration(const std::vector<CalibRow>& rows, ScaleModelKind kind,
                                       int nbasis) {
    const bool spline_kind = kind == ScaleModelKind::Spline || kind == ScaleModelKind::SplineDist;
    const size_t min_rows = spline_kind ? 8 : (kind == ScaleModelKind::Identity ? 1 : 3);
    if (rows.size() < min_rows) throw std::invalid_argument("too few calibration rows");

    std::vector<double> x, y, d;
    for (const auto& r : rows) {
        x.push_back(r.grid.scale);
        y.push_back(r.fitted.scale);
        d.push_back(r.dist_to_sea_km);
    }

    ScaleCalibration c;
    c.kind = kind;
    c.n = static_cast<int>(rows.size());
    const size_t n = rows.size();

    switch (kind) {
        case ScaleModelKind::Identity: {
            double rss = 0.0;
            for (size_t i = 0; i < n; ++i) rss += (y[i] - x[i]) * (y[i] - x[i]);
            c.beta0 = 0.0;
            c.beta1 = 1.0;
            c.sigma = std::sqrt(rss / static_cast<double>(n));
            return c;
        }
        case ScaleModelKind::Linear: {
            const Ols2 o = ols_simple(x, y);
            c.beta0 = o.beta0;
            c.beta1 = o.beta1;
            c.sigma = o.sigma;
            return c;
        }
        case ScaleModelKind::LinearDist: {
            Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 3);
            Eigen::VectorXd yv(static_cast<Eigen::Index>(n));
            for (size_t i = 0; i < n; ++i) {
                X(static_cast<Eigen::Index>(i), 0) = 1.0;
                X(static_cast<Eigen::Index>(i), 1) = x[i];
                X(static_cast<Eigen::Index>(i), 2) = d[i];
                yv(static_cast<Eigen::Index>(i)) = y[i];
            }
            const Eigen::MatrixXd XtX = X.transpose() * X;
            Eigen::FullPivLU<Eigen::MatrixXd> lu(XtX);
            if (!lu.isInvertible()) throw std::invalid_argument("degenerate design");
            const Eigen::VectorXd beta = lu.solve(X.transpose() * yv);
            c.beta0 = beta(0);
            c.beta1 = beta(1);
            c.beta_dist = beta(2);
            const double rss = (yv - X * beta).squaredNorm();
            c.sigma = n > 3 ? std::sqrt(rss / static_cast<double>(n - 3)) : 0.0;
            return c;
        }
        case ScaleModelKind::Spline: {
            c.fit = fit_penalized_spline(x, y, Eigen::MatrixXd(static_cast<Eigen::Index>(n), 0),
                                         nbasis);
            c.sigma = c.fit.sigma_resid;
            c.gcv_fallback = c.fit.gcv_fallback;
            return c;
        }
        case ScaleModelKind::SplineDist: {
            Eigen::MatrixXd extras(static_cast<Eigen::Index>(n), 1);
            for (size_t i = 0; i < n; ++i) extras(static_cast<Eigen::Index>(i), 0) = d[i];
            c.fit = fit_penalized_spline(x, y, extras, nbasis);
            c.beta_dist = c.fit.extra_coef(0);
            c.sigma = c.fit.sigma_resid;
            c.gcv_fallback = c.fit.gcv_fallback;
            return c;
        }
    }
    throw std::logic_error("unreachable");
}

std::map<ScaleModelKind, double> leave_one_out_calibration(
    const std::vector<CalibRow>& rows, const std::vector<ScaleModelKind>& models) {
    if (rows.size() < 4) throw std::invalid_argument("too few calibration rows");
    std::map<ScaleModelKind, double> out;
    for (const ScaleModelKind kind : models) {
        double sse = 0.0;
        for (size_t i = 0; i < rows.size(); ++i) {
            std::vector<CalibRow> train;
            train.reserve(rows.size() - 1);
            for (size_t j = 0; j < rows.size(); ++j)
                if (j != i) train.push_back(rows[j]);
            const ScaleCalibration c = fit_scale_calibration(train, kind);
            const double pred = c.predict(rows[i].grid.scale, rows[i].dist_to_sea_km);
            const double e = pred - rows[i].fitted.scale;
            sse += e * e;
        }
        out[kind] = std::sqrt(sse / static_cast<double>(rows.size()));
    }
    return out;
}

std::vector<std::optional<double>> empirical_percentiles(
    const std::vector<std::optional<double>>& values, size_t min_present) {
    std::vector<std::pair<double, size_t>> present;
    for (size_t i = 0; i < values.size(); ++i)
        if (values[i].has_value()) present.emplace_back(*values[i], i);
    const size_t n = present.size();
    if (n < std::max<size_t>(1, min_present)) throw std::invalid_argument("too few present values");
    std::sort(present.begin(), present.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (present.front().first == present.back().first)
        throw std::invalid_argument("degenerate series");

    std::vector<std::optional<double>> out(values.size());
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && present[j].first == present[i].first) ++j;
        // 1-based ranks i+1 .. j averaged.
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        const double p = (avg_rank - 0.5) / static_cast<double>(n);
        for (size_t r = i; r < j; ++r) out[present[r].second] = p;
        i = j;
    }
    return out;
}

CorrectedSeries correct_series(const std::string& station_id,
                               const std::vector<std::optional<double>>& values,
                               const WeibullParams& target) {
    check_params(target);
    CorrectedSeries cs;
    cs.station_id = station_id;
    cs.params = target;
    cs.percentiles = empirical_percentiles(values);
    cs.corrected.resize(values.size());
    for (size_t i = 0; i < values.size(); ++i)
        if (cs.percentiles[i].has_value())
            cs.corrected[i] = weibull_quantile(*cs.percentiles[i], target);
    return cs;
}

double weibull_variance(const WeibullParams& p) {
    check_params(p);
    const double g1 = std::tgamma(1.0 + 1.0 / p.shape);
    const double g2 = std::tgamma(1.0 + 2.0 / p.shape);
    return p.scale * p.scale * (g2 - g1 * g1);
}

CalibrationValidation validate_calibrated_distributions(
    const std::vector<StationValidationInput>& stations) {
    if (stations.empty()) throw std::invalid_argument("no stations given");
    std::vector<double> em, ev, ep, mm, mv, mp;
    for (const auto& s : stations) {
        if (s.sample.size() < 2) throw std::invalid_argument("too few present values");
        check_params(s.calibrated);
        const double n = static_cast<double>(s.sample.size());
        double mean = 0.0;
        for (double v : s.sample) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : s.sample) var += (v - mean) * (v - mean);
        var /= (n - 1.0);
        em.push_back(mean);
        ev.push_back(var);
        ep.push_back(empirical_quantile_type7(s.sample, 0.95));
        mm.push_back(weibull_mean(s.calibrated));
        mv.push_back(weibull_variance(s.calibrated));
        mp.push_back(weibull_quantile(0.95, s.calibrated));
    }
    const auto make_row = [](const std::vector<double>& emp, const std::vector<double>& mod) {
        ValidationRow row;
        double mae = 0.0;
        for (size_t i = 0; i < emp.size(); ++i) mae += std::abs(emp[i] - mod[i]);
        row.mae = mae / static_cast<double>(emp.size());
        row.pearson_r = pearson(emp, mod);
        return row;
    };
    CalibrationValidation v;
    v.mean = make_row(em, mm);
    v.variance = make_row(ev, mv);
    v.p95 = make_row(ep, mp);
    v.n_stations = static_cast<int>(stations.size());
    return v;
}

}  // namespace windfuse
