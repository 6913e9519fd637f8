#include "windfuse/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "windfuse/covariance.hpp"
#include "windfuse/evaluation.hpp"
#include "windfuse/geo.hpp"
#include "windfuse/rng.hpp"

namespace windfuse {

namespace {

std::string padded_id(const std::string& prefix, int i, int total) {
    const int width = total >= 100 ? 3 : 2;
    std::string num = std::to_string(i + 1);
    while (static_cast<int>(num.size()) < width) num.insert(num.begin(), '0');
    return prefix + num;
}

std::vector<StationRecord> generate_layout(const SimulationConfig& cfg,
                                           std::set<std::string>* junk_ids) {
    GaussianRng rng(derive_seed(cfg.seed, 101));
    std::vector<StationRecord> out;
    auto place = [&](const std::string& prefix, int count, StationClass cls) {
        for (int i = 0; i < count; ++i) {
            StationRecord st;
            st.id = padded_id(prefix, i, count);
            st.lat = cfg.box_lat0 + rng.uniform() * (cfg.box_lat1 - cfg.box_lat0);
            st.lon = cfg.box_lon0 + rng.uniform() * (cfg.box_lon1 - cfg.box_lon0);
            st.cls = cls;
            out.push_back(st);
        }
    };
    place("met", cfg.n_met, StationClass::Met);
    place("pws", cfg.n_pws, StationClass::A);
    place("junk", cfg.n_junk, StationClass::U);
    for (int i = 0; i < cfg.n_junk; ++i) junk_ids->insert(padded_id("junk", i, cfg.n_junk));
    return out;
}

GpData select_sites(const GpData& d, const std::vector<int>& keep) {
    GpData out;
    out.t0 = d.t0;
    const int m = static_cast<int>(keep.size());
    out.x1.resize(m);
    out.y.resize(m, d.y.cols());
    out.dist_km.resize(m, m);
    for (int r = 0; r < m; ++r) {
        const int i = keep[static_cast<size_t>(r)];
        out.ids.push_back(d.ids[static_cast<size_t>(i)]);
        out.lat.push_back(d.lat[static_cast<size_t>(i)]);
        out.lon.push_back(d.lon[static_cast<size_t>(i)]);
        out.cls.push_back(d.cls[static_cast<size_t>(i)]);
        out.x1[r] = d.x1[i];
        out.y.row(r) = d.y.row(i);
        for (int c = 0; c < m; ++c) out.dist_km(r, c) = d.dist_km(i, keep[static_cast<size_t>(c)]);
    }
    return out;
}

GpConfig study_fit_config(GpVariant variant, FitStrategy strategy) {
    GpConfig config;
    config.variant = variant;
    // The simulator has neither a covariate nor a diurnal cycle.
    config.include_x1 = false;
    config.estimate_diurnal = false;
    config.compute_laplace = false;
    // The study grinds through hundreds of fits; past this budget the
    // optimizer only polishes digits the summary tables never show.
    config.max_iters = 150;
    config.gtol = 1e-3;
    if (strategy == FitStrategy::Grouped) {
        config.class_group = {0, 1, 1, 1, 2};
    } else {
        config.class_group = {0, 0, 0, 0, 0};
    }
    return config;
}

}  // namespace

std::vector<StationRecord> clustered_layout(const SimulationConfig& cfg, double offset_deg,
                                            std::uint64_t seed, std::set<std::string>* junk_ids) {
    if (cfg.n_met < 1) throw std::invalid_argument("clustered layout needs a reference station");
    if (!(offset_deg >= 0.0)) throw std::invalid_argument("negative cluster offset");
    GaussianRng rng(seed);
    std::vector<StationRecord> out;
    auto clip = [](double v, double a, double b) { return v < a ? a : (v > b ? b : v); };
    for (int i = 0; i < cfg.n_met; ++i) {
        StationRecord r;
        r.id = padded_id("met", i, cfg.n_met);
        r.cls = StationClass::Met;
        r.lat = cfg.box_lat0 + (cfg.box_lat1 - cfg.box_lat0) * rng.uniform();
        r.lon = cfg.box_lon0 + (cfg.box_lon1 - cfg.box_lon0) * rng.uniform();
        out.push_back(r);
    }
    for (int i = 0; i < cfg.n_pws; ++i) {
        const auto anchor = static_cast<size_t>(rng.uniform() * cfg.n_met);
        StationRecord r;
        r.id = padded_id("pws", i, cfg.n_pws);
        r.cls = i % 3 == 0 ? StationClass::A : (i % 3 == 1 ? StationClass::B : StationClass::C);
        r.lat = clip(out[anchor].lat + offset_deg * rng.normal(), cfg.box_lat0, cfg.box_lat1);
        r.lon = clip(out[anchor].lon + offset_deg * rng.normal(), cfg.box_lon0, cfg.box_lon1);
        out.push_back(r);
    }
    for (int i = 0; i < cfg.n_junk; ++i) {
        StationRecord r;
        r.id = padded_id("junk", i, cfg.n_junk);
        r.cls = StationClass::U;
        r.lat = cfg.box_lat0 + (cfg.box_lat1 - cfg.box_lat0) * rng.uniform();
        r.lon = cfg.box_lon0 + (cfg.box_lon1 - cfg.box_lon0) * rng.uniform();
        if (junk_ids) junk_ids->insert(r.id);
        out.push_back(r);
    }
    return out;
}

GpData SimulatedDataset::to_gp_data() const {
    GpData out;
    out.t0 = 0;
    const int n = static_cast<int>(stations.size());
    out.x1 = Eigen::VectorXd::Zero(n);
    out.y = y;
    out.dist_km.resize(n, n);
    for (int i = 0; i < n; ++i) {
        const auto& st = stations[static_cast<size_t>(i)];
        out.ids.push_back(st.id);
        out.lat.push_back(st.lat);
        out.lon.push_back(st.lon);
        out.cls.push_back(st.cls);
    }
    for (int i = 0; i < n; ++i) {
        out.dist_km(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
            const double d =
                haversine_km(out.lat[static_cast<size_t>(i)], out.lon[static_cast<size_t>(i)],
                             out.lat[static_cast<size_t>(j)], out.lon[static_cast<size_t>(j)]);
            out.dist_km(i, j) = d;
            out.dist_km(j, i) = d;
        }
    }
    return out;
}

SimulatedDataset simulate(const SimulationConfig& cfg) {
    if (cfg.n_times < 2) throw std::invalid_argument("too few times");
    if (!(cfg.phi > 0.0) || !(cfg.sigma_z > 0.0))
        throw std::invalid_argument("out-of-domain hyperparameters");
    if (!(std::abs(cfg.rho) < 1.0)) throw std::invalid_argument("out-of-domain hyperparameters: rho");
    if (!(cfg.sigma_met >= 0.0) || !(cfg.sigma_pws >= 0.0) || !(cfg.junk_sd >= 0.0))
        throw std::invalid_argument("negative noise sd");

    SimulatedDataset out;
    out.config = cfg;
    if (cfg.layout.empty()) {
        out.config.junk_ids.clear();
        out.stations = generate_layout(cfg, &out.config.junk_ids);
        out.config.layout = out.stations;
    } else {
        out.stations = cfg.layout;
    }
    const int n = static_cast<int>(out.stations.size());
    if (n < 1) throw std::invalid_argument("empty layout");
    std::set<std::string> ids;
    for (const auto& st : out.stations) ids.insert(st.id);
    for (const auto& j : out.config.junk_ids)
        if (!ids.count(j)) throw std::invalid_argument("unknown station in junk list: " + j);

    Eigen::MatrixXd dist(n, n);
    for (int i = 0; i < n; ++i) {
        dist(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
            const double d = haversine_km(out.stations[static_cast<size_t>(i)].lat,
                                          out.stations[static_cast<size_t>(i)].lon,
                                          out.stations[static_cast<size_t>(j)].lat,
                                          out.stations[static_cast<size_t>(j)].lon);
            dist(i, j) = d;
            dist(j, i) = d;
        }
    }
    const Eigen::MatrixXd sigma = spatial_covariance(dist, cfg.phi, cfg.sigma_z);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) throw std::runtime_error("covariance not positive definite");
    const Eigen::MatrixXd l = llt.matrixL();

    const long t_len = cfg.n_times;
    out.z.resize(n, t_len);
    out.y.resize(n, t_len);

    GaussianRng field_rng(derive_seed(cfg.seed, 1));
    GaussianRng noise_rng(derive_seed(cfg.seed, 2));
    GaussianRng junk_rng(derive_seed(cfg.seed, 3));

    // Stationary AR(1): start at the marginal law, innovate with variance
    // scaled so the marginal is preserved.
    Eigen::VectorXd eta(n);
    const double innov = std::sqrt(1.0 - cfg.rho * cfg.rho);
    for (long t = 0; t < t_len; ++t) {
        for (int i = 0; i < n; ++i) eta[i] = field_rng.normal();
        if (t == 0) {
            out.z.col(0) = l * eta;
        } else {
            out.z.col(t) = cfg.rho * out.z.col(t - 1) + innov * (l * eta);
        }
    }

    for (long t = 0; t < t_len; ++t) {
        for (int i = 0; i < n; ++i) {
            const auto& st = out.stations[static_cast<size_t>(i)];
            if (out.config.junk_ids.count(st.id)) {
                out.y(i, t) = cfg.junk_sd * junk_rng.normal();
            } else {
                const double sd = (st.cls == StationClass::Met) ? cfg.sigma_met : cfg.sigma_pws;
                out.y(i, t) = cfg.mean + out.z(i, t) + sd * noise_rng.normal();
            }
        }
    }
    return out;
}

std::string to_string(FitStrategy s) {
    switch (s) {
        case FitStrategy::ReliableOnly: return "reliable-only";
        case FitStrategy::Pooled: return "pooled";
        case FitStrategy::Grouped: return "grouped";
    }
    return "?";
}

FitStrategy fit_strategy_from_string(const std::string& s) {
    if (s == "reliable-only") return FitStrategy::ReliableOnly;
    if (s == "pooled") return FitStrategy::Pooled;
    if (s == "grouped") return FitStrategy::Grouped;
    throw std::invalid_argument("unknown fit strategy: " + s);
}

std::vector<StudyCellResult> run_simulation_study(const StudyConfig& study) {
    std::vector<StudyCellResult> cells;
    const PcPriors priors = PcPriors::defaults();
    LosocvConfig cv;
    cv.held_out = StationClass::Met;
    cv.refit_per_fold = false;
    cv.rmse_on_ms_scale = false;

    for (size_t ni = 0; ni < study.noise_levels.size(); ++ni) {
        for (int rep = 0; rep < study.reps; ++rep) {
            SimulationConfig cfg = study.base;
            cfg.sigma_pws = study.noise_levels[ni];
            cfg.seed = derive_seed(study.seed, ni * 100000ULL + static_cast<std::uint64_t>(rep));
            const SimulatedDataset sim = simulate(cfg);
            const GpData full = sim.to_gp_data();
            std::vector<int> met_idx;
            for (int i = 0; i < full.n_sites(); ++i)
                if (full.cls[static_cast<size_t>(i)] == StationClass::Met) met_idx.push_back(i);
            const GpData met_only = select_sites(full, met_idx);

            for (GpVariant variant : study.variants) {
                for (FitStrategy strategy : study.strategies) {
                    StudyCellResult cell;
                    cell.sigma_pws = cfg.sigma_pws;
                    cell.variant = variant;
                    cell.strategy = strategy;
                    cell.rep = rep;
                    try {
                        const GpData& data =
                            (strategy == FitStrategy::ReliableOnly) ? met_only : full;
                        const GpConfig config = study_fit_config(variant, strategy);
                        const LosocvResult res = losocv(data, config, priors, cv);
                        cell.rmse = res.rmse;
                        cell.crps = res.crps;
                        cell.hyper = res.fit.hyper;
                        cell.ok = res.complete && std::isfinite(res.rmse);
                        if (!res.complete) cell.error = "one or more folds failed";
                    } catch (const std::exception& e) {
                        cell.ok = false;
                        cell.error = e.what();
                    }
                    cells.push_back(cell);
                }
            }
        }
    }
    return cells;
}

std::vector<StudySummaryRow> summarize_study(const std::vector<StudyCellResult>& cells) {
    std::vector<StudySummaryRow> rows;
    auto find_row = [&rows](const StudyCellResult& c) -> StudySummaryRow& {
        for (auto& r : rows) {
            if (r.sigma_pws == c.sigma_pws && r.variant == c.variant && r.strategy == c.strategy)
                return r;
        }
        StudySummaryRow r;
        r.sigma_pws = c.sigma_pws;
        r.variant = c.variant;
        r.strategy = c.strategy;
        rows.push_back(r);
        return rows.back();
    };
    for (const auto& c : cells) {
        StudySummaryRow& r = find_row(c);
        ++r.n_total;
        if (!c.ok) continue;
        ++r.n_ok;
        r.rmse += c.rmse;
        r.crps += c.crps;
        r.phi += c.hyper.phi;
        r.sigma_z += c.hyper.sigma_z;
        if (c.hyper.rho) r.rho += *c.hyper.rho;
        r.sd_met += c.hyper.sigma_for(StationClass::Met);
        r.sd_pws += c.hyper.sigma_for(StationClass::A);
        r.sd_junk += c.hyper.sigma_for(StationClass::U);
    }
    for (auto& r : rows) {
        if (r.n_ok == 0) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            r.rmse = r.crps = r.phi = r.sigma_z = r.rho = r.sd_met = r.sd_pws = r.sd_junk = nan;
            continue;
        }
        const double k = static_cast<double>(r.n_ok);
        r.rmse /= k;
        r.crps /= k;
        r.phi /= k;
        r.sigma_z /= k;
        r.sd_met /= k;
        r.sd_pws /= k;
        r.sd_junk /= k;
        r.rho = (r.variant == GpVariant::Ar1) ? r.rho / k
                                              : std::numeric_limits<double>::quiet_NaN();
    }
    return rows;
}

}  // namespace windfuse
