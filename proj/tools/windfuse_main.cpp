// Command-line front end. Each subcommand wires CSV/JSON files to one library
// entry point; all numeric work lives in the library.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "windfuse/bias.hpp"
#include "windfuse/csv.hpp"
#include "windfuse/dataset.hpp"
#include "windfuse/distributions.hpp"
#include "windfuse/evaluation.hpp"
#include "windfuse/geo.hpp"
#include "windfuse/gp.hpp"
#include "windfuse/qc.hpp"
#include "windfuse/simulation.hpp"
#include "windfuse/time_axis.hpp"

using json = nlohmann::json;
using namespace windfuse;

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& l : lines) out << l << "\n";
}

// key = value lines, '#' comments, blank lines ignored.
std::map<std::string, std::string> read_kv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("bad config line: " + line);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

GridParamField read_grid_csv(const std::string& path) {
    const CsvTable t = read_csv(path);
    const auto clon = t.col("lon"), clat = t.col("lat");
    const auto cshape = t.col("shape"), cscale = t.col("scale");
    GridParamField field;
    for (const auto& r : t.rows) {
        GridPoint p;
        p.lon = parse_double(r[clon]);
        p.lat = parse_double(r[clat]);
        p.params.shape = parse_double(r[cshape]);
        p.params.scale = parse_double(r[cscale]);
        field.points.push_back(p);
    }
    validate_grid(field);
    return field;
}

// corrected.csv rows: station_id,timestamp,wind_speed_ms,corrected_ms.
// Rows with an empty corrected value are treated as missing.
std::vector<WindSeries> read_corrected_csv(const std::string& path) {
    const CsvTable t = read_csv(path);
    const auto cid = t.col("station_id"), cts = t.col("timestamp"), cval = t.col("corrected_ms");
    std::map<std::string, std::map<EpochHour, double>> by_station;
    for (const auto& r : t.rows) {
        if (r[cval].empty()) continue;
        by_station[r[cid]][parse_iso_hour(r[cts])] = parse_double(r[cval]);
    }
    std::vector<WindSeries> out;
    for (const auto& [id, points] : by_station) {
        WindSeries s;
        s.station_id = id;
        s.t0 = points.begin()->first;
        s.values.assign(static_cast<size_t>(points.rbegin()->first - s.t0) + 1, std::nullopt);
        for (const auto& [t0, v] : points) s.values[static_cast<size_t>(t0 - s.t0)] = v;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<double> present_values(const Dataset& ds, size_t station) {
    std::vector<double> v;
    for (const auto& x : ds.values[station])
        if (x) v.push_back(*x);
    return v;
}

std::map<std::string, double> station_distances_to_sea(
    const std::vector<StationRecord>& stations, const std::string& coastline_path) {
    std::vector<std::pair<double, double>> coast;
    if (!coastline_path.empty()) coast = read_coastline_csv(coastline_path);
    std::map<std::string, double> dist;
    for (const auto& s : stations) {
        if (s.dist_to_sea_km)
            dist[s.id] = *s.dist_to_sea_km;
        else if (!coast.empty())
            dist[s.id] = min_dist_to_polyline_km(s.lat, s.lon, coast);
    }
    return dist;
}

bool scale_kind_uses_dist(ScaleModelKind k) {
    return k == ScaleModelKind::LinearDist || k == ScaleModelKind::SplineDist;
}

double dist_for(const std::map<std::string, double>& dist_to_sea, const std::string& id,
                bool needed) {
    if (const auto it = dist_to_sea.find(id); it != dist_to_sea.end()) return it->second;
    if (needed)
        throw std::runtime_error("station " + id +
                                 " has no dist_to_sea_km; supply --coastline or use a "
                                 "distance-free scale model");
    return 0.0;
}

struct Calibrations {
    ShapeCalibration shape;
    ScaleCalibration scale;
    std::vector<CalibRow> rows;  // reference stations used
};

// Grid-to-station calibration fitted on reference (MET) stations: per-station
// Weibull MLE against IDW-interpolated grid parameters.
Calibrations fit_calibrations(const Dataset& ds, const GridParamField& grid,
                              const std::map<std::string, double>& dist_to_sea,
                              ScaleModelKind scale_kind) {
    Calibrations cal;
    for (size_t i = 0; i < ds.n_stations(); ++i) {
        const auto& st = ds.stations[i];
        if (st.cls != StationClass::Met) continue;
        const auto sample = present_values(ds, i);
        if (sample.size() < 10) continue;
        CalibRow row;
        row.station_id = st.id;
        row.grid = idw_interpolate(grid, st.lat, st.lon);
        const DistFit f = fit_mle(DistFamily::Weibull, sample);
        row.fitted = {f.p1, f.p2};
        row.dist_to_sea_km = dist_for(dist_to_sea, st.id, scale_kind_uses_dist(scale_kind));
        cal.rows.push_back(std::move(row));
    }
    cal.shape = fit_shape_calibration(cal.rows);
    cal.scale = fit_scale_calibration(cal.rows, scale_kind);
    return cal;
}

WeibullParams calibrated_params_at(const Calibrations& cal, const GridParamField& grid,
                                   double lat, double lon, double dist_to_sea_km) {
    const WeibullParams g = idw_interpolate(grid, lat, lon);
    return {cal.shape.predict(g.shape), cal.scale.predict(g.scale, dist_to_sea_km)};
}

// Covariate: expected sqrt wind speed under the station's grid-implied
// Weibull, calibrated by default.
std::map<std::string, double> covariate_map(const Dataset& ds, const GridParamField& grid,
                                            const std::map<std::string, double>& dist_to_sea,
                                            const Calibrations* cal) {
    std::map<std::string, double> x1;
    for (const auto& st : ds.stations) {
        const double d =
            dist_for(dist_to_sea, st.id, cal && scale_kind_uses_dist(cal->scale.kind));
        const WeibullParams p = cal ? calibrated_params_at(*cal, grid, st.lat, st.lon, d)
                                    : idw_interpolate(grid, st.lat, st.lon);
        x1[st.id] = sqrt_weibull_mean(p);
    }
    return x1;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

struct FitOptions {
    GpConfig config;
    std::string covariate = "calibrated";  // or "raw"
    ScaleModelKind scale_kind = ScaleModelKind::SplineDist;
};

FitOptions parse_fit_options(const std::string& config_path, GpVariant variant) {
    FitOptions opt;
    opt.config.variant = variant;
    if (config_path.empty()) return opt;
    for (const auto& [k, v] : read_kv(config_path)) {
        if (k == "include_x1")
            opt.config.include_x1 = v == "true" || v == "1";
        else if (k == "estimate_diurnal")
            opt.config.estimate_diurnal = v == "true" || v == "1";
        else if (k == "compute_laplace")
            opt.config.compute_laplace = v == "true" || v == "1";
        else if (k == "max_iters")
            opt.config.max_iters = std::stoi(v);
        else if (k == "gtol")
            opt.config.gtol = std::stod(v);
        else if (k == "class_group") {
            std::istringstream in(v);
            std::string tok;
            for (auto& g : opt.config.class_group) {
                if (!std::getline(in, tok, ',')) throw std::runtime_error("class_group needs 5 entries");
                g = std::stoi(tok);
            }
        } else if (k == "covariate") {
            if (v != "calibrated" && v != "raw") throw std::runtime_error("covariate: calibrated|raw");
            opt.covariate = v;
        } else if (k == "scale_model")
            opt.scale_kind = scale_model_from_string(v);
        else
            throw std::runtime_error("unknown config key: " + k);
    }
    return opt;
}

std::string canonical_options(const FitOptions& o) {
    std::ostringstream os;
    os << "variant=" << to_string(o.config.variant) << ";include_x1=" << o.config.include_x1
       << ";estimate_diurnal=" << o.config.estimate_diurnal
       << ";compute_laplace=" << o.config.compute_laplace << ";max_iters=" << o.config.max_iters
       << ";gtol=" << o.config.gtol << ";class_group=";
    for (int g : o.config.class_group) os << g << ',';
    os << ";covariate=" << o.covariate << ";scale_model=" << to_string(o.scale_kind);
    return os.str();
}

struct LoadedData {
    Dataset ds;
    GridParamField grid;
    std::map<std::string, double> dist_to_sea;
    std::optional<Calibrations> cal;
    GpData gp;
};

LoadedData load_gp_inputs(const std::string& corrected, const std::string& stations,
                          const std::string& grid_path, const std::string& coastline,
                          const FitOptions& opt) {
    LoadedData d;
    d.ds = validate_dataset(read_stations_csv(stations), read_corrected_csv(corrected));
    d.grid = read_grid_csv(grid_path);
    d.dist_to_sea = station_distances_to_sea(d.ds.stations, coastline);
    if (opt.covariate == "calibrated")
        d.cal = fit_calibrations(d.ds, d.grid, d.dist_to_sea, opt.scale_kind);
    d.gp = gp_data_from_dataset(d.ds, covariate_map(d.ds, d.grid, d.dist_to_sea,
                                                    d.cal ? &*d.cal : nullptr));
    return d;
}

json hyper_to_json(const GpHyperParams& h) {
    json eps;
    for (int c = 0; c < kNumClasses; ++c)
        eps[to_string(static_cast<StationClass>(c))] = h.sigma_eps[c];
    json j{{"phi", h.phi}, {"sigma_z", h.sigma_z}, {"sigma_eps", eps}, {"sigma_d", h.sigma_d}};
    if (h.rho) j["rho"] = *h.rho;
    return j;
}

GpHyperParams hyper_from_json(const json& j) {
    GpHyperParams h;
    h.phi = j.at("phi");
    h.sigma_z = j.at("sigma_z");
    h.sigma_d = j.at("sigma_d");
    for (int c = 0; c < kNumClasses; ++c)
        h.sigma_eps[c] = j.at("sigma_eps").at(to_string(static_cast<StationClass>(c)));
    if (j.contains("rho")) h.rho = j.at("rho").get<double>();
    return h;
}

int cmd_fit_dist(const std::string& obs_path, const std::string& out_path) {
    const auto series = read_observations_csv(obs_path);
    std::vector<std::string> lines{"station_id,family,param1,param2,loglik,ks,p95diff"};
    std::map<std::string, std::vector<double>> samples;
    for (const auto& s : series) {
        std::vector<double> v;
        for (const auto& x : s.values)
            if (x) v.push_back(*x);
        samples[s.station_id] = std::move(v);
    }
    for (const auto& [id, sample] : samples) {
        for (const DistFamily fam : {DistFamily::Weibull, DistFamily::Gamma, DistFamily::LogNormal}) {
            try {
                const DistFit f = fit_mle(fam, sample);
                lines.push_back(id + "," + to_string(fam) + "," + fmt(f.p1) + "," + fmt(f.p2) +
                                "," + fmt(f.loglik) + "," + fmt(f.ks_stat) + "," +
                                fmt(f.p95_abs_diff));
            } catch (const std::exception& e) {
                std::cerr << "skip " << id << " " << to_string(fam) << ": " << e.what() << "\n";
            }
        }
    }
    write_lines(out_path, lines);
    try {
        const SelectionReport rep = select_distribution(samples);
        std::cout << "fitted " << rep.n_stations_fitted << " stations";
        if (!rep.failed_stations.empty()) std::cout << " (" << rep.failed_stations.size() << " failed)";
        std::cout << "\n";
        for (const auto& [fam, summary] : rep.by_family)
            std::cout << "  " << to_string(fam) << ": loglik wins " << summary.loglik_wins
                      << ", mean KS " << summary.mean_ks << ", mean |p95 diff| "
                      << summary.mean_p95_abs_diff << "\n";
    } catch (const std::exception& e) {
        std::cerr << "family summary unavailable: " << e.what() << "\n";
    }
    return 0;
}

int cmd_qc(const std::string& stations, const std::string& obs, const std::string& out_path,
           double missing_threshold, int min_neighbours, double rho_min) {
    const Dataset ds = validate_dataset(read_stations_csv(stations), read_observations_csv(obs));
    std::vector<std::string> lines{"station_id,frac_present,n_good_neighbours,passed,fail_reasons"};
    int passed = 0;
    for (const auto& r : run_qc(ds, missing_threshold, min_neighbours, rho_min)) {
        int good = 0;
        for (const auto& n : r.neighbour_checks) good += n.ok ? 1 : 0;
        std::string reasons;
        for (const auto& why : r.fail_reasons) reasons += (reasons.empty() ? "" : ";") + why;
        lines.push_back(r.station_id + "," + fmt(r.frac_present) + "," + std::to_string(good) +
                        "," + (r.passed ? "true" : "false") + "," + reasons);
        passed += r.passed ? 1 : 0;
    }
    write_lines(out_path, lines);
    std::cout << passed << "/" << ds.n_stations() << " stations passed\n";
    return 0;
}

int cmd_bias_correct(const std::string& stations_path, const std::string& obs_path,
                     const std::string& grid_path, const std::string& coastline,
                     const std::string& out_path, const std::string& calib_path,
                     const std::string& scale_model) {
    const Dataset ds =
        validate_dataset(read_stations_csv(stations_path), read_observations_csv(obs_path));
    const GridParamField grid = read_grid_csv(grid_path);
    const auto dist_to_sea = station_distances_to_sea(ds.stations, coastline);
    const ScaleModelKind kind = scale_model_from_string(scale_model);
    const Calibrations cal = fit_calibrations(ds, grid, dist_to_sea, kind);

    // Reference stations pass through unchanged; consumer stations are
    // quantile-mapped onto their calibrated grid-implied Weibull.
    std::vector<std::string> lines{"station_id,timestamp,wind_speed_ms,corrected_ms"};
    std::vector<StationValidationInput> validation;
    int n_corrected = 0;
    for (size_t i = 0; i < ds.n_stations(); ++i) {
        const auto& st = ds.stations[i];
        std::vector<std::optional<double>> corrected = ds.values[i];
        const double d = dist_for(dist_to_sea, st.id, scale_kind_uses_dist(kind));
        WeibullParams target{};
        bool corrected_ok = false;
        if (st.cls != StationClass::Met) {
            target = calibrated_params_at(cal, grid, st.lat, st.lon, d);
            try {
                corrected = correct_series(st.id, ds.values[i], target).corrected;
                corrected_ok = true;
            } catch (const std::exception& e) {
                std::cerr << "left uncorrected " << st.id << ": " << e.what() << "\n";
                for (auto& v : corrected) v.reset();
            }
        } else if (ds.present_count(i) >= 10) {
            // Calibration quality is judged where the data is trusted.
            StationValidationInput v;
            v.station_id = st.id;
            v.sample = present_values(ds, i);
            v.calibrated = calibrated_params_at(cal, grid, st.lat, st.lon, d);
            validation.push_back(std::move(v));
        }
        n_corrected += corrected_ok ? 1 : 0;
        for (size_t j = 0; j < ds.n_times; ++j) {
            if (!ds.values[i][j]) continue;
            lines.push_back(st.id + "," + format_iso_hour(ds.time_at(j)) + "," +
                            fmt(*ds.values[i][j]) + "," +
                            (corrected[j] ? fmt(*corrected[j]) : ""));
        }
    }
    write_lines(out_path, lines);

    std::vector<std::string> report{"item,value"};
    report.push_back("n_reference_stations," + std::to_string(cal.rows.size()));
    report.push_back("shape_beta0," + fmt(cal.shape.beta0));
    report.push_back("shape_beta1," + fmt(cal.shape.beta1));
    report.push_back("shape_sigma," + fmt(cal.shape.sigma));
    report.push_back("scale_model," + to_string(cal.scale.kind));
    report.push_back("scale_sigma," + fmt(cal.scale.sigma));
    if (cal.scale.gcv_fallback) report.push_back("scale_gcv_fallback,true");
    try {
        const auto loo = leave_one_out_calibration(
            cal.rows, {ScaleModelKind::Identity, ScaleModelKind::Linear, ScaleModelKind::LinearDist,
                       ScaleModelKind::Spline, ScaleModelKind::SplineDist});
        for (const auto& [k, rmse] : loo) report.push_back("loo_rmse_" + to_string(k) + "," + fmt(rmse));
    } catch (const std::exception& e) {
        std::cerr << "scale-model comparison skipped: " << e.what() << "\n";
    }
    if (validation.size() >= 3) {
        const CalibrationValidation v = validate_calibrated_distributions(validation);
        report.push_back("validation_mean_mae," + fmt(v.mean.mae));
        report.push_back("validation_mean_r," + fmt(v.mean.pearson_r));
        report.push_back("validation_variance_mae," + fmt(v.variance.mae));
        report.push_back("validation_variance_r," + fmt(v.variance.pearson_r));
        report.push_back("validation_p95_mae," + fmt(v.p95.mae));
        report.push_back("validation_p95_r," + fmt(v.p95.pearson_r));
    }
    write_lines(calib_path, report);
    std::cout << "corrected " << n_corrected << " consumer stations against "
              << cal.rows.size() << " reference fits\n";
    return 0;
}

int cmd_fit(const std::string& variant_name, const std::string& corrected,
            const std::string& stations, const std::string& grid_path,
            const std::string& coastline, const std::string& config_path,
            const std::string& out_path) {
    const GpVariant variant = gp_variant_from_string(variant_name);
    const FitOptions opt = parse_fit_options(config_path, variant);
    const LoadedData d = load_gp_inputs(corrected, stations, grid_path, coastline, opt);
    const ModelFit fit = fit_gp(d.gp, opt.config);

    json j;
    j["variant"] = to_string(variant);
    j["config"] = {{"include_x1", opt.config.include_x1},
                   {"estimate_diurnal", opt.config.estimate_diurnal},
                   {"compute_laplace", opt.config.compute_laplace},
                   {"max_iters", opt.config.max_iters},
                   {"gtol", opt.config.gtol},
                   {"class_group", opt.config.class_group},
                   {"covariate", opt.covariate},
                   {"scale_model", to_string(opt.scale_kind)}};
    {
        std::ostringstream os;
        os << std::hex << fnv1a(canonical_options(opt));
        j["config_hash"] = os.str();
    }
    j["inputs"] = {{"corrected", corrected},
                   {"stations", stations},
                   {"grid", grid_path},
                   {"coastline", coastline}};
    j["t0"] = d.gp.t0;
    j["n_times"] = d.gp.n_times();
    j["hyper"] = hyper_to_json(fit.hyper);
    j["fixed"] = {{"beta0", fit.fixed.beta0},
                  {"beta1", fit.fixed.beta1},
                  {"diurnal", fit.fixed.d}};
    j["log_posterior"] = fit.log_posterior;
    if (fit.laplace_cov.size() > 0) {
        std::vector<std::vector<double>> cov(static_cast<size_t>(fit.laplace_cov.rows()));
        for (int r = 0; r < fit.laplace_cov.rows(); ++r)
            for (int c = 0; c < fit.laplace_cov.cols(); ++c)
                cov[static_cast<size_t>(r)].push_back(fit.laplace_cov(r, c));
        j["laplace"] = {{"params", fit.param_names}, {"cov", cov}};
    }
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << j.dump(2) << "\n";
    std::cout << "MAP phi " << fit.hyper.phi << " km, sigma_z " << fit.hyper.sigma_z;
    if (fit.hyper.rho) std::cout << ", rho " << *fit.hyper.rho;
    std::cout << ", log posterior " << fit.log_posterior << "\n";
    return 0;
}

int cmd_predict(const std::string& fit_path, const std::string& targets_path,
                const std::string& out_path, std::string corrected, std::string stations,
                std::string grid_path, std::string coastline, const std::string& times_arg) {
    std::ifstream in(fit_path);
    if (!in) throw std::runtime_error("cannot read " + fit_path);
    json j;
    in >> j;

    FitOptions opt;
    opt.config.variant = gp_variant_from_string(j.at("variant"));
    const json& jc = j.at("config");
    opt.config.include_x1 = jc.at("include_x1");
    opt.config.estimate_diurnal = jc.at("estimate_diurnal");
    opt.config.max_iters = jc.at("max_iters");
    opt.config.gtol = jc.at("gtol");
    for (int c = 0; c < kNumClasses; ++c)
        opt.config.class_group[static_cast<size_t>(c)] = jc.at("class_group").at(static_cast<size_t>(c));
    opt.covariate = jc.at("covariate");
    opt.scale_kind = scale_model_from_string(jc.at("scale_model"));

    if (corrected.empty()) corrected = j.at("inputs").at("corrected");
    if (stations.empty()) stations = j.at("inputs").at("stations");
    if (grid_path.empty()) grid_path = j.at("inputs").at("grid");
    if (coastline.empty()) coastline = j.at("inputs").value("coastline", "");
    const LoadedData d = load_gp_inputs(corrected, stations, grid_path, coastline, opt);

    ModelFit fit;
    fit.variant = opt.config.variant;
    fit.config = opt.config;
    fit.hyper = hyper_from_json(j.at("hyper"));
    fit.fixed.beta0 = j.at("fixed").at("beta0");
    fit.fixed.beta1 = j.at("fixed").at("beta1");
    for (size_t h = 0; h < 24; ++h) fit.fixed.d[h] = j.at("fixed").at("diurnal").at(h);

    std::vector<std::pair<double, double>> coast;
    if (d.cal && scale_kind_uses_dist(d.cal->scale.kind)) {
        if (coastline.empty())
            throw std::runtime_error("the scale model uses dist_to_sea_km; supply --coastline "
                                     "so targets get a distance");
        coast = read_coastline_csv(coastline);
    }
    std::vector<PredictionTarget> targets;
    const CsvTable t = read_csv(targets_path);
    const auto clat = t.col("lat"), clon = t.col("lon");
    for (const auto& r : t.rows) {
        PredictionTarget tgt;
        tgt.lat = parse_double(r[clat]);
        tgt.lon = parse_double(r[clon]);
        const double dist =
            coast.empty() ? 0.0 : min_dist_to_polyline_km(tgt.lat, tgt.lon, coast);
        const WeibullParams p =
            d.cal ? calibrated_params_at(*d.cal, d.grid, tgt.lat, tgt.lon, dist)
                  : idw_interpolate(d.grid, tgt.lat, tgt.lon);
        tgt.x1 = sqrt_weibull_mean(p);
        targets.push_back(tgt);
    }

    std::vector<long> times;
    if (!times_arg.empty()) {
        std::istringstream is(times_arg);
        std::string tok;
        while (std::getline(is, tok, ',')) times.push_back(std::stol(tok));
    }

    std::vector<std::string> lines{"lat,lon,time_index,timestamp,mean_sqrt,sd_sqrt,mean_ms"};
    for (const auto& row : predict_gp(fit, d.gp, targets, times)) {
        const auto& tgt = targets[static_cast<size_t>(row.target)];
        lines.push_back(fmt(tgt.lat) + "," + fmt(tgt.lon) + "," + std::to_string(row.time_index) +
                        "," + format_iso_hour(d.gp.t0 + row.time_index) + "," +
                        fmt(row.mean_sqrt) + "," + fmt(row.sd_sqrt) + "," + fmt(row.mean_ms));
    }
    write_lines(out_path, lines);
    std::cout << targets.size() << " targets, " << (lines.size() - 1) << " predictions\n";
    return 0;
}

int cmd_losocv(const std::string& corrected, const std::string& stations,
               const std::string& grid_path, const std::string& coastline,
               const std::string& models_arg, const std::string& config_path,
               const std::string& out_path) {
    std::vector<std::string> lines{"model,station_id,n_scored,rmse,crps,note"};
    std::istringstream is(models_arg);
    std::string model;
    while (std::getline(is, model, ',')) {
        std::string variant_name = model, nugget = "grouped";
        if (const auto colon = model.find(':'); colon != std::string::npos) {
            variant_name = model.substr(0, colon);
            nugget = model.substr(colon + 1);
        }
        FitOptions opt = parse_fit_options(config_path, gp_variant_from_string(variant_name));
        if (nugget == "pooled")
            opt.config.class_group = {0, 0, 0, 0, 0};
        else if (nugget != "grouped")
            throw std::runtime_error("model suffix must be :grouped or :pooled");
        const LoadedData d = load_gp_inputs(corrected, stations, grid_path, coastline, opt);
        const LosocvResult res = losocv(d.gp, opt.config, PcPriors::defaults(), LosocvConfig{});
        for (const auto& f : res.folds)
            lines.push_back(model + "," + f.station_id + "," + std::to_string(f.n_scored) + "," +
                            (f.ok ? fmt(f.rmse) : "") + "," + (f.ok ? fmt(f.crps) : "") + "," +
                            (f.ok ? "" : f.error));
        long scored = 0;
        for (const auto& f : res.folds) scored += f.ok ? f.n_scored : 0;
        lines.push_back(model + ",ALL," + std::to_string(scored) + "," + fmt(res.rmse) + "," +
                        fmt(res.crps) + "," + (res.complete ? "complete" : "partial"));
        std::cout << model << ": rmse " << res.rmse << " m/s, crps " << res.crps << " (sqrt scale)"
                  << (res.complete ? "" : " [partial]") << "\n";
    }
    write_lines(out_path, lines);
    return 0;
}

int cmd_evaluate(const std::string& pred_path, const std::string& truth_path,
                 const std::string& out_path) {
    const CsvTable pred = read_csv(pred_path);
    const auto plat = pred.col("lat"), plon = pred.col("lon"), pts = pred.col("timestamp");
    const auto pms = pred.col("mean_ms"), psq = pred.col("mean_sqrt"), psd = pred.col("sd_sqrt");
    const CsvTable truth = read_csv(truth_path);
    const auto tlat = truth.col("lat"), tlon = truth.col("lon"), tts = truth.col("timestamp");
    const auto tval = truth.col("wind_speed_ms");

    auto key = [](const std::string& lat, const std::string& lon, const std::string& ts) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f|%.6f|", parse_double(lat), parse_double(lon));
        return std::string(buf) + ts;
    };
    std::map<std::string, double> truth_by_key;
    for (const auto& r : truth.rows) truth_by_key[key(r[tlat], r[tlon], r[tts])] = parse_double(r[tval]);

    std::vector<double> pred_ms, truth_ms, crps_scores;
    for (const auto& r : pred.rows) {
        const auto it = truth_by_key.find(key(r[plat], r[plon], r[pts]));
        if (it == truth_by_key.end()) continue;
        pred_ms.push_back(parse_double(r[pms]));
        truth_ms.push_back(it->second);
        crps_scores.push_back(
            crps_gaussian(parse_double(r[psq]), parse_double(r[psd]), std::sqrt(it->second)));
    }
    if (pred_ms.empty()) throw std::runtime_error("no matching prediction/truth pairs");

    std::vector<std::string> lines{"metric,value"};
    lines.push_back("n_pairs," + std::to_string(pred_ms.size()));
    lines.push_back("rmse_ms," + fmt(rmse(pred_ms, truth_ms)));
    double crps_mean = 0.0;
    for (double c : crps_scores) crps_mean += c;
    lines.push_back("crps_sqrt," + fmt(crps_mean / static_cast<double>(crps_scores.size())));
    const std::pair<const char*, double> tails[] = {{"p1", 0.99}, {"p2.5", 0.975}, {"p5", 0.95}};
    for (const auto& [name, q] : tails) {
        if (pred_ms.size() < 100) break;
        const auto em = extreme_metrics(pred_ms, truth_ms, q);
        if (!em) continue;  // subset too small
        lines.push_back(std::string("extreme_") + name + "_rmse," + fmt(em->rmse));
        lines.push_back(std::string("extreme_") + name + "_bias," + fmt(em->bias));
        lines.push_back(std::string("extreme_") + name + "_r," + fmt(em->pearson_r));
    }
    write_lines(out_path, lines);
    std::cout << pred_ms.size() << " pairs, rmse " << rmse(pred_ms, truth_ms) << " m/s\n";
    return 0;
}

SimulationConfig sim_config_from_kv(const std::map<std::string, std::string>& kv,
                                    EpochHour* t0_out) {
    SimulationConfig cfg;
    std::string layout = "uniform";
    double offset_deg = 0.35;
    std::uint64_t layout_seed = 1;
    for (const auto& [k, v] : kv) {
        if (k == "n_met") cfg.n_met = std::stoi(v);
        else if (k == "n_pws") cfg.n_pws = std::stoi(v);
        else if (k == "n_junk") cfg.n_junk = std::stoi(v);
        else if (k == "box_lat0") cfg.box_lat0 = std::stod(v);
        else if (k == "box_lat1") cfg.box_lat1 = std::stod(v);
        else if (k == "box_lon0") cfg.box_lon0 = std::stod(v);
        else if (k == "box_lon1") cfg.box_lon1 = std::stod(v);
        else if (k == "n_times") cfg.n_times = std::stol(v);
        else if (k == "phi") cfg.phi = std::stod(v);
        else if (k == "sigma_z") cfg.sigma_z = std::stod(v);
        else if (k == "sigma_met") cfg.sigma_met = std::stod(v);
        else if (k == "sigma_pws") cfg.sigma_pws = std::stod(v);
        else if (k == "rho") cfg.rho = std::stod(v);
        else if (k == "mean") cfg.mean = std::stod(v);
        else if (k == "junk_sd") cfg.junk_sd = std::stod(v);
        else if (k == "seed") cfg.seed = std::stoull(v);
        else if (k == "layout") layout = v;
        else if (k == "offset_deg") offset_deg = std::stod(v);
        else if (k == "layout_seed") layout_seed = std::stoull(v);
        else if (k == "t0" && t0_out) *t0_out = parse_iso_hour(v);
        else if (k == "t0") continue;
        else if (k.rfind("study_", 0) == 0) continue;  // study keys share the file
        else throw std::runtime_error("unknown simulation key: " + k);
    }
    if (layout == "clustered")
        cfg.layout = clustered_layout(cfg, offset_deg, layout_seed, &cfg.junk_ids);
    else if (layout != "uniform")
        throw std::runtime_error("layout: uniform|clustered");
    return cfg;
}

int cmd_simulate(const std::string& config_path, const std::vector<std::string>& out_paths) {
    EpochHour t0 = parse_iso_hour("2024-01-01T00:00:00Z");
    const SimulatedDataset sim = simulate(sim_config_from_kv(read_kv(config_path), &t0));
    // Model-scale values (Gaussian, may be negative), hence "value" not
    // "wind_speed_ms".
    std::vector<std::string> lines{"station_id,timestamp,value"};
    for (size_t i = 0; i < sim.stations.size(); ++i)
        for (long t = 0; t < sim.y.cols(); ++t)
            lines.push_back(sim.stations[i].id + "," +
                            format_iso_hour(t0 + static_cast<EpochHour>(t)) + "," +
                            fmt(sim.y(static_cast<long>(i), t)));
    write_lines(out_paths[0], lines);
    write_stations_csv(out_paths[1], sim.stations);
    std::cout << sim.stations.size() << " stations x " << sim.y.cols() << " hours";
    if (!sim.config.junk_ids.empty()) {
        std::cout << "; junk:";
        for (const auto& id : sim.config.junk_ids) std::cout << " " << id;
    }
    std::cout << "\n";
    return 0;
}

int cmd_sim_study(const std::string& config_path, const std::vector<std::string>& out_paths) {
    const auto kv = read_kv(config_path);
    StudyConfig study;
    study.base = sim_config_from_kv(kv, nullptr);
    auto split = [](const std::string& v) {
        std::vector<std::string> toks;
        std::istringstream is(v);
        std::string tok;
        while (std::getline(is, tok, ',')) toks.push_back(tok);
        return toks;
    };
    for (const auto& [k, v] : kv) {
        if (k == "study_reps") study.reps = std::stoi(v);
        else if (k == "study_seed") study.seed = std::stoull(v);
        else if (k == "study_noise_levels") {
            study.noise_levels.clear();
            for (const auto& tok : split(v)) study.noise_levels.push_back(std::stod(tok));
        } else if (k == "study_variants") {
            study.variants.clear();
            for (const auto& tok : split(v)) study.variants.push_back(gp_variant_from_string(tok));
        } else if (k == "study_strategies") {
            study.strategies.clear();
            for (const auto& tok : split(v)) study.strategies.push_back(fit_strategy_from_string(tok));
        }
    }

    const auto cells = run_simulation_study(study);
    int failed = 0;
    for (const auto& c : cells)
        if (!c.ok) {
            ++failed;
            std::cerr << "cell failed: sigma_pws " << c.sigma_pws << " " << to_string(c.variant)
                      << " " << to_string(c.strategy) << " rep " << c.rep << ": " << c.error << "\n";
        }
    std::vector<std::string> perf{"noise_level,variant,strategy,n_ok,n_total,rmse,crps"};
    std::vector<std::string> params{
        "noise_level,variant,strategy,phi,sigma_z,rho,sd_met,sd_pws1,sd_pws2"};
    for (const auto& r : summarize_study(cells)) {
        const std::string head = fmt(r.sigma_pws) + "," + to_string(r.variant) + "," +
                                 to_string(r.strategy) + ",";
        perf.push_back(head + std::to_string(r.n_ok) + "," + std::to_string(r.n_total) + "," +
                       fmt(r.rmse) + "," + fmt(r.crps));
        params.push_back(head + fmt(r.phi) + "," + fmt(r.sigma_z) + "," + fmt(r.rho) + "," +
                         fmt(r.sd_met) + "," + fmt(r.sd_pws) + "," + fmt(r.sd_junk));
    }
    write_lines(out_paths[0], perf);
    write_lines(out_paths[1], params);
    std::cout << cells.size() << " cells, " << failed << " failed\n";
    return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wind-speed QC, bias correction, and spatio-temporal fusion"};
    app.require_subcommand(1);

    std::string stations, observations, grid, coastline, corrected, out, calib_out, config_path;
    std::string variant = "igp", models = "igp,ar1", fit_json, targets, times, pred, truth;
    std::string scale_model = "spline+dist";
    std::vector<std::string> outs;
    double missing_threshold = 0.9, rho_min = 0.5;
    int min_neighbours = 5;

    auto* fit_dist = app.add_subcommand("fit-dist", "fit candidate distributions per station");
    fit_dist->add_option("--observations", observations)->required()->check(CLI::ExistingFile);
    fit_dist->add_option("--out", out)->required();

    auto* qc = app.add_subcommand("qc", "missing-data and neighbour-correlation checks");
    qc->add_option("--stations", stations)->required()->check(CLI::ExistingFile);
    qc->add_option("--observations", observations)->required()->check(CLI::ExistingFile);
    qc->add_option("--out", out)->required();
    qc->add_option("--missing-threshold", missing_threshold);
    qc->add_option("--min-neighbours", min_neighbours);
    qc->add_option("--rho-min", rho_min);

    auto* bias = app.add_subcommand("bias-correct", "quantile-map consumer stations to the grid");
    bias->add_option("--stations", stations)->required()->check(CLI::ExistingFile);
    bias->add_option("--observations", observations)->required()->check(CLI::ExistingFile);
    bias->add_option("--grid", grid)->required()->check(CLI::ExistingFile);
    bias->add_option("--coastline", coastline)->check(CLI::ExistingFile);
    bias->add_option("--out", out)->required();
    bias->add_option("--calib-report", calib_out)->required();
    bias->add_option("--scale-model", scale_model);

    auto* fit = app.add_subcommand("fit", "MAP-fit the latent Gaussian model");
    fit->add_option("--variant", variant)->check(CLI::IsMember({"igp", "ar1"}))->required();
    fit->add_option("--corrected", corrected)->required()->check(CLI::ExistingFile);
    fit->add_option("--stations", stations)->required()->check(CLI::ExistingFile);
    fit->add_option("--grid", grid)->required()->check(CLI::ExistingFile);
    fit->add_option("--coastline", coastline)->check(CLI::ExistingFile);
    fit->add_option("--config", config_path)->check(CLI::ExistingFile);
    fit->add_option("--out", out)->required();

    auto* predict = app.add_subcommand("predict", "kriging prediction at target coordinates");
    predict->add_option("--fit", fit_json)->required()->check(CLI::ExistingFile);
    predict->add_option("--targets", targets)->required()->check(CLI::ExistingFile);
    predict->add_option("--out", out)->required();
    predict->add_option("--corrected", corrected)->check(CLI::ExistingFile);
    predict->add_option("--stations", stations)->check(CLI::ExistingFile);
    predict->add_option("--grid", grid)->check(CLI::ExistingFile);
    predict->add_option("--coastline", coastline)->check(CLI::ExistingFile);
    predict->add_option("--times", times, "comma-separated time indices, default all");

    auto* cv = app.add_subcommand("losocv", "leave-one-station-out cross-validation");
    cv->add_option("--corrected", corrected)->required()->check(CLI::ExistingFile);
    cv->add_option("--stations", stations)->required()->check(CLI::ExistingFile);
    cv->add_option("--grid", grid)->required()->check(CLI::ExistingFile);
    cv->add_option("--coastline", coastline)->check(CLI::ExistingFile);
    cv->add_option("--models", models, "e.g. igp,ar1,igp:pooled");
    cv->add_option("--config", config_path)->check(CLI::ExistingFile);
    cv->add_option("--out", out)->required();

    auto* evaluate = app.add_subcommand("evaluate", "score predictions against held-out truth");
    evaluate->add_option("--pred", pred)->required()->check(CLI::ExistingFile);
    evaluate->add_option("--truth", truth)->required()->check(CLI::ExistingFile);
    evaluate->add_option("--out", out)->required();

    auto* simulate = app.add_subcommand("simulate", "draw one synthetic network");
    simulate->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
    simulate->add_option("--out", outs, "obs.csv stations.csv")->required()->expected(2);

    auto* study = app.add_subcommand("sim-study", "noise-level x variant x strategy sweep");
    study->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
    study->add_option("--out", outs, "performance.csv parameters.csv")->required()->expected(2);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fit_dist) return cmd_fit_dist(observations, out);
        if (*qc) return cmd_qc(stations, observations, out, missing_threshold, min_neighbours, rho_min);
        if (*bias)
            return cmd_bias_correct(stations, observations, grid, coastline, out, calib_out,
                                    scale_model);
        if (*fit) return cmd_fit(variant, corrected, stations, grid, coastline, config_path, out);
        if (*predict)
            return cmd_predict(fit_json, targets, out, corrected, stations, grid, coastline, times);
        if (*cv) return cmd_losocv(corrected, stations, grid, coastline, models, config_path, out);
        if (*evaluate) return cmd_evaluate(pred, truth, out);
        if (*simulate) return cmd_simulate(config_path, outs);
        if (*study) return cmd_sim_study(config_path, outs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
