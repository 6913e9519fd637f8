#include "windfuse/qc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "windfuse/geo.hpp"

namespace windfuse {

namespace {

// Average-tied 1-based ranks.
std::vector<double> tied_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) throw std::invalid_argument("degenerate ranks");
    return sab / std::sqrt(saa * sbb);
}

// Common present points of two series aligned by absolute time.
void common_support(const WindSeries& a, const WindSeries& b, std::vector<double>& va,
                    std::vector<double>& vb) {
    const EpochHour lo = std::max(a.t0, b.t0);
    const EpochHour hi = std::min(a.t0 + static_cast<EpochHour>(a.values.size()),
                                  b.t0 + static_cast<EpochHour>(b.values.size()));
    for (EpochHour t = lo; t < hi; ++t) {
        const auto& x = a.values[static_cast<std::size_t>(t - a.t0)];
        const auto& y = b.values[static_cast<std::size_t>(t - b.t0)];
        if (x && y) {
            va.push_back(*x);
            vb.push_back(*y);
        }
    }
}

}  // namespace

MissingDataResult missing_data_filter(const WindSeries& series, double threshold) {
    std::size_t present = 0;
    for (const auto& v : series.values)
        if (v) ++present;
    MissingDataResult r;
    r.frac_present = series.values.empty()
                         ? 0.0
                         : static_cast<double>(present) / static_cast<double>(series.values.size());
    r.passed = r.frac_present >= threshold;
    return r;
}

std::vector<std::optional<double>> rank_transform(const WindSeries& series) {
    std::vector<double> present;
    for (const auto& v : series.values)
        if (v) present.push_back(*v);
    if (present.size() < 2) throw std::invalid_argument("too few present values");
    if (*std::max_element(present.begin(), present.end()) ==
        *std::min_element(present.begin(), present.end()))
        throw std::invalid_argument("degenerate ranks");

    const std::vector<double> r = tied_ranks(present);
    const double n = static_cast<double>(present.size());
    std::vector<std::optional<double>> out(series.values.size());
    std::size_t j = 0;
    for (std::size_t i = 0; i < series.values.size(); ++i)
        if (series.values[i]) out[i] = r[j++] / n;
    return out;
}

double spearman(const WindSeries& a, const WindSeries& b) {
    std::vector<double> va, vb;
    common_support(a, b, va, vb);
    if (va.size() < 3) throw std::invalid_argument("insufficient overlap");
    return pearson(tied_ranks(va), tied_ranks(vb));
}

std::vector<QcReport> neighbour_filter(const Dataset& ds, int min_neighbours, double rho_min) {
    const std::size_t n = ds.n_stations();
    if (static_cast<int>(n) - 1 < min_neighbours)
        throw std::invalid_argument("insufficient neighbours");

    const std::size_t k_candidates =
        std::min(n - 1, static_cast<std::size_t>(std::max(min_neighbours, 8)));

    std::vector<QcReport> reports;
    reports.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        QcReport rep;
        rep.station_id = ds.stations[i].id;
        rep.frac_present = missing_data_filter(ds.series(i)).frac_present;

        if (ds.stations[i].cls == StationClass::Met) {
            rep.passed = true;
            reports.push_back(std::move(rep));
            continue;
        }

        std::vector<std::pair<double, std::size_t>> dist;
        dist.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            dist.emplace_back(haversine_km(ds.stations[i].lat, ds.stations[i].lon,
                                           ds.stations[j].lat, ds.stations[j].lon),
                              j);
        }
        std::sort(dist.begin(), dist.end());

        const WindSeries si = ds.series(i);
        int good = 0;
        for (std::size_t c = 0; c < k_candidates; ++c) {
            NeighbourCheck chk;
            chk.neighbour_id = ds.stations[dist[c].second].id;
            chk.distance_km = dist[c].first;
            try {
                chk.spearman_rho = spearman(si, ds.series(dist[c].second));
                chk.ok = chk.spearman_rho > rho_min;
            } catch (const std::exception&) {
                chk.spearman_rho = std::numeric_limits<double>::quiet_NaN();
                chk.ok = false;
            }
            if (chk.ok) ++good;
            rep.neighbour_checks.push_back(std::move(chk));
        }
        if (good < min_neighbours)
            rep.fail_reasons.push_back("only " + std::to_string(good) + " of " +
                                       std::to_string(k_candidates) +
                                       " nearest neighbours correlate above threshold");
        rep.passed = rep.fail_reasons.empty();
        reports.push_back(std::move(rep));
    }
    std::sort(reports.begin(), reports.end(),
              [](const QcReport& a, const QcReport& b) { return a.station_id < b.station_id; });
    return reports;
}

std::vector<QcReport> run_qc(const Dataset& ds, double missing_threshold, int min_neighbours,
                             double rho_min) {
    std::vector<QcReport> reports = neighbour_filter(ds, min_neighbours, rho_min);
    for (auto& rep : reports) {
        const std::size_t i = ds.station_index(rep.station_id);
        if (ds.stations[i].cls == StationClass::Met) continue;
        if (rep.frac_present < missing_threshold) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "below missing-data threshold (%.3f)",
                          rep.frac_present);
            rep.fail_reasons.push_back(buf);
        }
        rep.passed = rep.fail_reasons.empty();
    }
    return reports;
}

std::vector<PairCorrelation> correlation_vs_distance(
    const Dataset& ds, bool increments,
    std::optional<std::pair<StationClass, StationClass>> pair_class_filter) {
    const std::size_t n = ds.n_stations();

    // Optionally first-difference each series over consecutive present hours.
    std::vector<WindSeries> series;
    series.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        WindSeries s = ds.series(i);
        if (increments) {
            WindSeries d;
            d.station_id = s.station_id;
            d.t0 = s.t0 + 1;
            d.values.assign(s.values.size() > 0 ? s.values.size() - 1 : 0, std::nullopt);
            for (std::size_t j = 1; j < s.values.size(); ++j)
                if (s.values[j] && s.values[j - 1])
                    d.values[j - 1] = *s.values[j] - *s.values[j - 1];
            s = std::move(d);
        }
        series.push_back(std::move(s));
    }

    std::vector<PairCorrelation> rows;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto ca = ds.stations[i].cls, cb = ds.stations[j].cls;
            if (pair_class_filter) {
                const auto [f1, f2] = *pair_class_filter;
                if (!((ca == f1 && cb == f2) || (ca == f2 && cb == f1))) continue;
            }
            PairCorrelation pc;
            pc.id_a = ds.stations[i].id;
            pc.id_b = ds.stations[j].id;
            pc.class_a = ca;
            pc.class_b = cb;
            pc.distance_km = haversine_km(ds.stations[i].lat, ds.stations[i].lon,
                                          ds.stations[j].lat, ds.stations[j].lon);
            std::vector<double> va, vb;
            common_support(series[i], series[j], va, vb);
            if (va.size() >= 3) {
                try {
                    pc.spearman_rho = pearson(tied_ranks(va), tied_ranks(vb));
                } catch (const std::exception&) {
                    pc.spearman_rho = std::numeric_limits<double>::quiet_NaN();
                }
                try {
                    pc.pearson_r = pearson(va, vb);
                } catch (const std::exception&) {
                    pc.pearson_r = std::numeric_limits<double>::quiet_NaN();
                }
            } else {
                pc.spearman_rho = std::numeric_limits<double>::quiet_NaN();
                pc.pearson_r = std::numeric_limits<double>::quiet_NaN();
            }
            rows.push_back(std::move(pc));
        }
    }
    return rows;
}

}  // namespace windfuse
