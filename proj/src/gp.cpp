#include "windfuse/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>

#include "windfuse/geo.hpp"

namespace windfuse {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// 24x23 orthonormal basis of the sum-to-zero subspace (Helmert columns).
Eigen::MatrixXd sum_zero_basis() {
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(24, 23);
    for (int j = 1; j <= 23; ++j) {
        const double norm = std::sqrt(static_cast<double>(j) * (j + 1));
        for (int i = 0; i < j; ++i) u(i, j - 1) = 1.0 / norm;
        u(j, j - 1) = -static_cast<double>(j) / norm;
    }
    return u;
}

struct DiurnalStructure {
    Eigen::MatrixXd u;        // 24 x 23
    Eigen::MatrixXd q_tilde;  // U' Q_cyc U, positive definite
    double logdet_q = 0.0;
};

const DiurnalStructure& diurnal_structure() {
    static const DiurnalStructure s = [] {
        DiurnalStructure d;
        d.u = sum_zero_basis();
        Eigen::MatrixXd q = 2.0 * Eigen::MatrixXd::Identity(24, 24);
        for (int i = 0; i < 24; ++i) {
            const int nxt = (i + 1) % 24;
            q(i, nxt) -= 1.0;
            q(nxt, i) -= 1.0;
        }
        d.q_tilde = d.u.transpose() * q * d.u;
        Eigen::LLT<Eigen::MatrixXd> llt(d.q_tilde);
        d.logdet_q = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        return d;
    }();
    return s;
}

struct ParamLayout {
    std::vector<int> groups;  // nugget groups present in the data, ascending
    bool diurnal = false;
    bool ar1 = false;
    std::vector<std::string> names;

    int dim() const { return static_cast<int>(names.size()); }
};

ParamLayout make_layout(const std::vector<StationClass>& cls, const GpConfig& config) {
    ParamLayout lay;
    std::set<int> gs;
    for (StationClass c : cls) gs.insert(config.class_group[static_cast<size_t>(c)]);
    lay.groups.assign(gs.begin(), gs.end());
    lay.diurnal = config.estimate_diurnal;
    lay.ar1 = (config.variant == GpVariant::Ar1);
    lay.names = {"log_phi", "log_sigma_z"};
    for (int g : lay.groups) lay.names.push_back("log_sigma_g" + std::to_string(g));
    if (lay.diurnal) lay.names.push_back("log_sigma_d");
    if (lay.ar1) lay.names.push_back("zeta_rho");
    return lay;
}

GpHyperParams decode_eta(const Eigen::VectorXd& eta, const ParamLayout& lay,
                         const GpConfig& config, const PcPriors& priors) {
    if (eta.size() != lay.dim()) throw std::invalid_argument("parameter dimension mismatch");
    GpHyperParams h;
    int k = 0;
    h.phi = std::exp(eta[k++]);
    h.sigma_z = std::exp(eta[k++]);
    std::map<int, double> by_group;
    for (int g : lay.groups) by_group[g] = std::exp(eta[k++]);
    for (size_t c = 0; c < kNumClasses; ++c) {
        const auto it = by_group.find(config.class_group[c]);
        // Classes absent from the data keep the prior median.
        h.sigma_eps[c] = (it != by_group.end()) ? it->second : priors.median_sigma_eps();
    }
    h.sigma_d = lay.diurnal ? std::exp(eta[k++]) : 0.0;
    if (lay.ar1) h.rho = std::tanh(eta[k++] / 2.0);
    return h;
}

// Per-site nugget variances from per-class sds.
Eigen::VectorXd nugget_variances(const std::vector<StationClass>& cls, const GpHyperParams& h) {
    Eigen::VectorXd v(static_cast<long>(cls.size()));
    for (size_t i = 0; i < cls.size(); ++i) {
        const double s = h.sigma_for(cls[i]);
        v[static_cast<long>(i)] = s * s;
    }
    return v;
}

int n_fixed_cols(const GpConfig& config) { return config.include_x1 ? 2 : 1; }

// Fixed-effect design slices: intercept, optional covariate, optional diurnal
// block (sum-to-zero basis row of the slice's hour).
std::vector<Eigen::MatrixXd> design_slices(const GpData& data, const GpConfig& config) {
    const int n = data.n_sites();
    const long t_len = data.n_times();
    const int pf = n_fixed_cols(config);
    const int p = pf + (config.estimate_diurnal ? 23 : 0);
    std::vector<Eigen::MatrixXd> f(static_cast<size_t>(t_len));
    const auto& ds = diurnal_structure();
    for (long t = 0; t < t_len; ++t) {
        Eigen::MatrixXd ft = Eigen::MatrixXd::Zero(n, p);
        ft.col(0).setOnes();
        if (config.include_x1) ft.col(1) = data.x1;
        if (config.estimate_diurnal) {
            const int h = hour_of_day(data.t0 + t);
            ft.block(0, pf, n, 23) = ds.u.row(h - 1).replicate(n, 1);
        }
        f[static_cast<size_t>(t)] = std::move(ft);
    }
    return f;
}

StData assemble(const GpData& data, const GpConfig& config) {
    return make_st_data(data.dist_km, data.y, design_slices(data, config));
}

LikelihoodPieces run_gram(const StData& sd, const GpHyperParams& h, const GpConfig& config,
                          const Eigen::VectorXd& nug) {
    if (config.variant == GpVariant::Ar1) {
        if (!h.rho || !(std::abs(*h.rho) < 1.0))
            throw std::invalid_argument("out-of-domain hyperparameters: rho");
        return ar1_gram(sd, h.phi, h.sigma_z, *h.rho, nug);
    }
    return igp_gram(sd, h.phi, h.sigma_z, nug);
}

// Marginal Gaussian log likelihood with beta integrated flat and the diurnal
// coefficients integrated against their RW1 prior. Optionally returns the
// GLS/BLUP coefficient vector.
double integrated_loglik(const LikelihoodPieces& pc, const GpConfig& config, double sigma_d,
                         Eigen::VectorXd* gamma_out) {
    const int p = static_cast<int>(pc.gram.rows()) - 1;
    const int pf = n_fixed_cols(config);
    const double s_yy = pc.gram(0, 0);
    const Eigen::VectorXd v = pc.gram.block(1, 0, p, 1);
    Eigen::MatrixXd a = pc.gram.block(1, 1, p, p);
    double log_prior_norm = 0.0;
    if (config.estimate_diurnal) {
        if (!(sigma_d > 0.0)) throw std::invalid_argument("out-of-domain hyperparameters: sigma_d");
        const auto& ds = diurnal_structure();
        const double sd2 = sigma_d * sigma_d;
        a.block(pf, pf, 23, 23) += ds.q_tilde / sd2;
        // log|Sigma_a| = 46 log sigma_d - log|Q~| and the 2 pi powers of the
        // diurnal density cancel against the gamma integral.
        log_prior_norm = 46.0 * std::log(sigma_d) - ds.logdet_q;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw std::runtime_error("degenerate fixed-effect design");
    const double logdet_a = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const Eigen::VectorXd gamma = llt.solve(v);
    if (gamma_out) *gamma_out = gamma;
    const double quad = s_yy - v.dot(gamma);
    const double n_eff = static_cast<double>(pc.n_obs) - pf;
    return -0.5 * (n_eff * kLog2Pi + pc.logdet + log_prior_norm + logdet_a + quad);
}

double log_prior_natural(const GpHyperParams& h, const ParamLayout& lay, const GpConfig& config,
                         const PcPriors& priors) {
    double lp = priors.log_phi(h.phi) + priors.log_sd(h.sigma_z, priors.rate_sigma_z);
    for (int g : lay.groups) {
        // Group sd read off the first member class.
        for (size_t c = 0; c < kNumClasses; ++c) {
            if (config.class_group[c] == g) {
                lp += priors.log_sd(h.sigma_eps[c], priors.rate_sigma_eps);
                break;
            }
        }
    }
    if (lay.diurnal) lp += priors.log_sd(h.sigma_d, priors.rate_sigma_d);
    if (lay.ar1) {
        if (!h.rho) throw std::invalid_argument("out-of-domain hyperparameters: rho");
        lp += priors.log_rho(*h.rho);
    }
    return lp;
}

// Change of variables to the transformed scale: +eta for each log parameter,
// log((1 - rho^2)/2) for zeta.
double log_jacobian(const Eigen::VectorXd& eta, const ParamLayout& lay) {
    double j = 0.0;
    const int n_scale = lay.dim() - (lay.ar1 ? 1 : 0);
    for (int i = 0; i < n_scale; ++i) j += eta[i];
    if (lay.ar1) {
        const double rho = std::tanh(eta[lay.dim() - 1] / 2.0);
        j += std::log((1.0 - rho * rho) / 2.0);
    }
    return j;
}

void check_hyper_domain(const GpHyperParams& h, const std::vector<StationClass>& cls,
                        const GpConfig& config) {
    if (!(h.phi > 0.0) || !std::isfinite(h.phi) || !(h.sigma_z > 0.0) || !std::isfinite(h.sigma_z))
        throw std::invalid_argument("out-of-domain hyperparameters");
    for (StationClass c : cls) {
        const double s = h.sigma_for(c);
        if (!(s >= 0.0) || !std::isfinite(s))
            throw std::invalid_argument("out-of-domain hyperparameters: sigma_eps");
    }
    if (!(h.sigma_d >= 0.0) || !std::isfinite(h.sigma_d))
        throw std::invalid_argument("out-of-domain hyperparameters: sigma_d");
    if (config.variant == GpVariant::Ar1 && (!h.rho || !(std::abs(*h.rho) < 1.0)))
        throw std::invalid_argument("out-of-domain hyperparameters: rho");
}

Eigen::MatrixXd residual_matrix(const GpData& data, const std::vector<Eigen::MatrixXd>& f,
                                const Eigen::VectorXd& gamma) {
    const int n = data.n_sites();
    const long t_len = data.n_times();
    Eigen::MatrixXd resid(n, t_len);
    for (long t = 0; t < t_len; ++t) {
        const Eigen::VectorXd mean_t = f[static_cast<size_t>(t)] * gamma;
        for (int i = 0; i < n; ++i) {
            const double y = data.y(i, t);
            resid(i, t) = std::isnan(y) ? y : y - mean_t[i];
        }
    }
    return resid;
}

// gamma vector in design order from explicit fixed effects.
Eigen::VectorXd pack_gamma(const FixedEffects& fixed, const GpConfig& config) {
    const int pf = n_fixed_cols(config);
    const int p = pf + (config.estimate_diurnal ? 23 : 0);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
    g[0] = fixed.beta0;
    if (config.include_x1) g[1] = fixed.beta1;
    if (config.estimate_diurnal) {
        const auto& ds = diurnal_structure();
        Eigen::VectorXd d(24);
        for (int i = 0; i < 24; ++i) d[i] = fixed.d[static_cast<size_t>(i)];
        g.tail(23) = ds.u.transpose() * d;
    }
    return g;
}

FixedEffects unpack_gamma(const Eigen::VectorXd& gamma, const GpConfig& config) {
    FixedEffects fx;
    fx.beta0 = gamma[0];
    fx.beta1 = config.include_x1 ? gamma[1] : 0.0;
    fx.d.fill(0.0);
    if (config.estimate_diurnal) {
        const auto& ds = diurnal_structure();
        const Eigen::VectorXd d = ds.u * gamma.tail(23);
        for (int i = 0; i < 24; ++i) fx.d[static_cast<size_t>(i)] = d[i];
    }
    return fx;
}

void check_data_shape(const GpData& data) {
    const long n = static_cast<long>(data.ids.size());
    if (static_cast<long>(data.lat.size()) != n || static_cast<long>(data.lon.size()) != n ||
        static_cast<long>(data.cls.size()) != n || data.x1.size() != n || data.y.rows() != n ||
        data.dist_km.rows() != n || data.dist_km.cols() != n)
        throw std::invalid_argument("site count mismatch");
}

}  // namespace

std::string to_string(GpVariant v) { return v == GpVariant::Igp ? "igp" : "ar1"; }

GpVariant gp_variant_from_string(const std::string& s) {
    if (s == "igp") return GpVariant::Igp;
    if (s == "ar1") return GpVariant::Ar1;
    throw std::invalid_argument("unknown variant: " + s);
}

PcPriors PcPriors::defaults() {
    static const PcPriors cached = [] {
        PcPriors p;
        p.rate_inv_phi = -200.0 * std::log(0.3);
        p.rate_sigma_z = std::log(2.0) / 0.75;
        p.rate_sigma_eps = std::log(10.0) / 0.75;
        p.rate_sigma_d = p.rate_sigma_eps;
        // theta solving P(rho > 0.8) = 0.7 under the distance-to-rho=1 prior.
        const double sq2 = std::sqrt(2.0);
        const double sq = std::sqrt(1.0 - 0.8);
        auto tail = [&](double th) {
            return (1.0 - std::exp(-th * sq)) / (1.0 - std::exp(-th * sq2));
        };
        double lo = 1e-8, hi = 50.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (tail(mid) < 0.7 ? lo : hi) = mid;
        }
        p.theta_rho = 0.5 * (lo + hi);
        return p;
    }();
    return cached;
}

double PcPriors::log_phi(double phi) const {
    if (!(phi > 0.0)) return -std::numeric_limits<double>::infinity();
    return std::log(rate_inv_phi) - 2.0 * std::log(phi) - rate_inv_phi / phi;
}

double PcPriors::log_sd(double s, double rate) const {
    if (!(s >= 0.0)) return -std::numeric_limits<double>::infinity();
    return std::log(rate) - rate * s;
}

double PcPriors::log_rho(double rho) const {
    if (!(rho > -1.0 && rho < 1.0)) return -std::numeric_limits<double>::infinity();
    const double d = std::sqrt(1.0 - rho);
    const double norm = 1.0 - std::exp(-theta_rho * std::sqrt(2.0));
    return std::log(theta_rho) - theta_rho * d - std::log(2.0 * d) - std::log(norm);
}

double PcPriors::median_phi() const { return rate_inv_phi / std::log(2.0); }
double PcPriors::median_sigma_z() const { return std::log(2.0) / rate_sigma_z; }
double PcPriors::median_sigma_eps() const { return std::log(2.0) / rate_sigma_eps; }
double PcPriors::median_sigma_d() const { return std::log(2.0) / rate_sigma_d; }

double PcPriors::median_rho() const {
    const double norm = 1.0 - std::exp(-theta_rho * std::sqrt(2.0));
    const double d = -std::log(1.0 - 0.5 * norm) / theta_rho;
    return 1.0 - d * d;
}

GpData GpData::without_site(int site) const {
    const int n = n_sites();
    if (site < 0 || site >= n) throw std::invalid_argument("site index out of range");
    GpData out;
    out.t0 = t0;
    out.x1.resize(n - 1);
    out.y.resize(n - 1, y.cols());
    out.dist_km.resize(n - 1, n - 1);
    int r = 0;
    for (int i = 0; i < n; ++i) {
        if (i == site) continue;
        out.ids.push_back(ids[static_cast<size_t>(i)]);
        out.lat.push_back(lat[static_cast<size_t>(i)]);
        out.lon.push_back(lon[static_cast<size_t>(i)]);
        out.cls.push_back(cls[static_cast<size_t>(i)]);
        out.x1[r] = x1[i];
        out.y.row(r) = y.row(i);
        int c = 0;
        for (int j = 0; j < n; ++j) {
            if (j == site) continue;
            out.dist_km(r, c++) = dist_km(i, j);
        }
        ++r;
    }
    return out;
}

GpData gp_data_from_dataset(const Dataset& ds, const std::map<std::string, double>& x1_by_station,
                            bool sqrt_transform) {
    GpData out;
    const int n = static_cast<int>(ds.n_stations());
    const long t_len = static_cast<long>(ds.n_times);
    out.t0 = ds.t0;
    out.x1.resize(n);
    out.y.resize(n, t_len);
    out.dist_km.resize(n, n);
    for (int i = 0; i < n; ++i) {
        const auto& st = ds.stations[static_cast<size_t>(i)];
        out.ids.push_back(st.id);
        out.lat.push_back(st.lat);
        out.lon.push_back(st.lon);
        out.cls.push_back(st.cls);
        const auto it = x1_by_station.find(st.id);
        out.x1[i] = (it != x1_by_station.end()) ? it->second
                                                : std::numeric_limits<double>::quiet_NaN();
        for (long t = 0; t < t_len; ++t) {
            const auto& v = ds.values[static_cast<size_t>(i)][static_cast<size_t>(t)];
            if (!v) {
                out.y(i, t) = std::numeric_limits<double>::quiet_NaN();
            } else {
                out.y(i, t) = sqrt_transform ? std::sqrt(*v) : *v;
            }
        }
    }
    for (int i = 0; i < n; ++i) {
        out.dist_km(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
            const double d = haversine_km(out.lat[static_cast<size_t>(i)],
                                          out.lon[static_cast<size_t>(i)],
                                          out.lat[static_cast<size_t>(j)],
                                          out.lon[static_cast<size_t>(j)]);
            out.dist_km(i, j) = d;
            out.dist_km(j, i) = d;
        }
    }
    return out;
}

MapObjective make_map_objective(const GpData& data, const GpConfig& config,
                                const PcPriors& priors) {
    check_data_shape(data);
    const ParamLayout lay = make_layout(data.cls, config);
    auto sd = std::make_shared<StData>(assemble(data, config));
    auto cls = std::make_shared<std::vector<StationClass>>(data.cls);

    MapObjective mo;
    mo.names = lay.names;
    mo.decode = [lay, config, priors](const Eigen::VectorXd& eta) {
        return decode_eta(eta, lay, config, priors);
    };
    Eigen::VectorXd med(lay.dim());
    int k = 0;
    med[k++] = std::log(priors.median_phi());
    med[k++] = std::log(priors.median_sigma_z());
    for (size_t i = 0; i < lay.groups.size(); ++i) med[k++] = std::log(priors.median_sigma_eps());
    if (lay.diurnal) med[k++] = std::log(priors.median_sigma_d());
    if (lay.ar1) med[k++] = 2.0 * std::atanh(priors.median_rho());
    mo.eta_median = med;

    mo.fn = [sd, cls, lay, config, priors](const Eigen::VectorXd& eta) -> double {
        if (eta.size() != lay.dim()) throw std::invalid_argument("parameter dimension mismatch");
        try {
            const GpHyperParams h = decode_eta(eta, lay, config, priors);
            if (!std::isfinite(h.phi) || !std::isfinite(h.sigma_z)) return 1e100;
            const Eigen::VectorXd nug = nugget_variances(*cls, h);
            const LikelihoodPieces pc = run_gram(*sd, h, config, nug);
            const double ll = integrated_loglik(pc, config, h.sigma_d, nullptr);
            const double val =
                -(ll + log_prior_natural(h, lay, config, priors) + log_jacobian(eta, lay));
            return std::isfinite(val) ? val : 1e100;
        } catch (const std::exception&) {
            // Transient excursions (overflowed scales, indefinite matrices)
            // are walls, not errors, while searching.
            return 1e100;
        }
    };
    return mo;
}

double log_likelihood_joint(const GpHyperParams& hyper, const FixedEffects& fixed,
                            const GpData& data, const GpConfig& config) {
    check_data_shape(data);
    check_hyper_domain(hyper, data.cls, config);
    const auto f = design_slices(data, config);
    const Eigen::VectorXd gamma = pack_gamma(fixed, config);
    const Eigen::MatrixXd resid = residual_matrix(data, f, gamma);
    std::vector<Eigen::MatrixXd> empty_f(f.size(), Eigen::MatrixXd(data.n_sites(), 0));
    const StData sd = make_st_data(data.dist_km, resid, empty_f);
    const Eigen::VectorXd nug = nugget_variances(data.cls, hyper);
    const LikelihoodPieces pc = run_gram(sd, hyper, config, nug);
    return -0.5 * (static_cast<double>(pc.n_obs) * kLog2Pi + pc.logdet + pc.gram(0, 0));
}

double log_posterior_joint(const GpHyperParams& hyper, const FixedEffects& fixed,
                           const GpData& data, const GpConfig& config, const PcPriors& priors) {
    double lp = log_likelihood_joint(hyper, fixed, data, config);
    const ParamLayout lay = make_layout(data.cls, config);
    if (config.estimate_diurnal) {
        if (!(hyper.sigma_d > 0.0))
            throw std::invalid_argument("out-of-domain hyperparameters: sigma_d");
        const auto& ds = diurnal_structure();
        Eigen::VectorXd d(24);
        for (int i = 0; i < 24; ++i) d[i] = fixed.d[static_cast<size_t>(i)];
        const Eigen::VectorXd a = ds.u.transpose() * d;
        const double sd2 = hyper.sigma_d * hyper.sigma_d;
        const double log_sigma_a = 46.0 * std::log(hyper.sigma_d) - ds.logdet_q;
        lp += -0.5 * (23.0 * kLog2Pi + log_sigma_a + a.dot(ds.q_tilde * a) / sd2);
    }
    return lp + log_prior_natural(hyper, lay, config, priors);
}

double log_posterior(const GpHyperParams& hyper, const GpData& data, const GpConfig& config,
                     const PcPriors& priors) {
    check_data_shape(data);
    check_hyper_domain(hyper, data.cls, config);
    const ParamLayout lay = make_layout(data.cls, config);
    const StData sd = assemble(data, config);
    const Eigen::VectorXd nug = nugget_variances(data.cls, hyper);
    const LikelihoodPieces pc = run_gram(sd, hyper, config, nug);
    const double ll = integrated_loglik(pc, config, hyper.sigma_d, nullptr);
    return ll + log_prior_natural(hyper, lay, config, priors);
}

ModelFit fit_gp(const GpData& data, const GpConfig& config, const PcPriors& priors) {
    check_data_shape(data);
    if (data.n_sites() < 2) throw std::invalid_argument("too few sites");
    if (data.n_sites() > 200) throw std::invalid_argument("too many sites");
    if (data.n_times() < 2) throw std::invalid_argument("too few times");
    if (config.include_x1) {
        for (int i = 0; i < data.n_sites(); ++i)
            if (!std::isfinite(data.x1[i]))
                throw std::invalid_argument("covariate missing for station " +
                                            data.ids[static_cast<size_t>(i)]);
    }

    const MapObjective mo = make_map_objective(data, config, priors);
    const ParamLayout lay = make_layout(data.cls, config);

    std::vector<Eigen::VectorXd> starts;
    for (double f : {1.0, 0.5, 2.0}) {
        Eigen::VectorXd eta = mo.eta_median;
        const double shift = std::log(f);
        const int n_scale = lay.dim() - (lay.ar1 ? 1 : 0);
        for (int i = 0; i < n_scale; ++i) eta[i] += shift;
        if (lay.ar1) eta[lay.dim() - 1] *= f;
        starts.push_back(eta);
    }

    MinimizeOptions opts;
    opts.gtol = config.gtol;
    opts.max_iters = config.max_iters;
    const OptimResult res = minimize_multistart(mo.fn, starts, opts);

    ModelFit fit;
    fit.variant = config.variant;
    fit.config = config;
    fit.hyper = mo.decode(res.x);
    fit.param_names = mo.names;
    fit.log_posterior = -res.value;

    // GLS/BLUP coefficients at the MAP.
    const StData sd = assemble(data, config);
    const Eigen::VectorXd nug = nugget_variances(data.cls, fit.hyper);
    const LikelihoodPieces pc = run_gram(sd, fit.hyper, config, nug);
    Eigen::VectorXd gamma;
    integrated_loglik(pc, config, fit.hyper.sigma_d, &gamma);
    fit.fixed = unpack_gamma(gamma, config);

    if (config.compute_laplace) {
        const Eigen::MatrixXd h = fd_hessian(mo.fn, res.x);
        fit.laplace_cov = inverse_psd_projected(h);
    }
    return fit;
}

FixedEffects estimate_fixed_effects(const GpHyperParams& hyper, const GpData& data,
                                    const GpConfig& config) {
    check_data_shape(data);
    check_hyper_domain(hyper, data.cls, config);
    const StData sd = assemble(data, config);
    const Eigen::VectorXd nug = nugget_variances(data.cls, hyper);
    const LikelihoodPieces pc = run_gram(sd, hyper, config, nug);
    Eigen::VectorXd gamma;
    integrated_loglik(pc, config, hyper.sigma_d, &gamma);
    return unpack_gamma(gamma, config);
}

std::vector<PredictionRow> predict_gp(const ModelFit& fit, const GpData& data,
                                      const std::vector<PredictionTarget>& targets,
                                      const std::vector<long>& time_indices) {
    check_data_shape(data);
    const GpConfig& config = fit.config;
    check_hyper_domain(fit.hyper, data.cls, config);
    const int n = data.n_sites();
    const long t_len = data.n_times();

    std::vector<long> times = time_indices;
    if (times.empty()) {
        times.resize(static_cast<size_t>(t_len));
        for (long t = 0; t < t_len; ++t) times[static_cast<size_t>(t)] = t;
    }
    for (long t : times)
        if (t < 0 || t >= t_len) throw std::invalid_argument("time index out of range");

    const auto f = design_slices(data, config);
    const Eigen::VectorXd gamma = pack_gamma(fit.fixed, config);
    const Eigen::MatrixXd resid = residual_matrix(data, f, gamma);
    std::vector<Eigen::MatrixXd> empty_f(f.size(), Eigen::MatrixXd(n, 0));
    const StData sd = make_st_data(data.dist_km, resid, empty_f);
    const Eigen::VectorXd nug = nugget_variances(data.cls, fit.hyper);

    const LatentPosterior lp =
        (config.variant == GpVariant::Ar1)
            ? ar1_latent_posterior(sd, fit.hyper.phi, fit.hyper.sigma_z, *fit.hyper.rho, nug,
                                   resid)
            : igp_latent_posterior(sd, fit.hyper.phi, fit.hyper.sigma_z, nug, resid);

    const Eigen::MatrixXd sigma_s =
        spatial_covariance(data.dist_km, fit.hyper.phi, fit.hyper.sigma_z);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma_s);
    if (llt.info() != Eigen::Success) throw std::runtime_error("covariance not positive definite");

    const double sz2 = fit.hyper.sigma_z * fit.hyper.sigma_z;
    std::vector<PredictionRow> rows;
    rows.reserve(targets.size() * times.size());
    for (size_t ti = 0; ti < targets.size(); ++ti) {
        const auto& tg = targets[ti];
        if (config.include_x1 && !std::isfinite(tg.x1))
            throw std::invalid_argument("target covariate missing");
        Eigen::VectorXd k(n);
        for (int i = 0; i < n; ++i)
            k[i] = matern_nu1(haversine_km(tg.lat, tg.lon, data.lat[static_cast<size_t>(i)],
                                           data.lon[static_cast<size_t>(i)]),
                              fit.hyper.phi, fit.hyper.sigma_z);
        const Eigen::VectorXd b = llt.solve(k);
        const double c0 = std::max(0.0, sz2 - k.dot(b));
        for (long t : times) {
            const int h = hour_of_day(data.t0 + t);
            double mean = fit.fixed.beta0 + fit.fixed.d[static_cast<size_t>(h - 1)];
            if (config.include_x1) mean += fit.fixed.beta1 * tg.x1;
            mean += b.dot(lp.mean.col(t));
            const double var =
                std::max(0.0, c0 + b.dot(lp.cov[static_cast<size_t>(t)] * b));
            PredictionRow r;
            r.target = static_cast<int>(ti);
            r.time_index = t;
            r.mean_sqrt = mean;
            r.sd_sqrt = std::sqrt(var);
            r.mean_ms = mean * mean + var;
            rows.push_back(r);
        }
    }
    return rows;
}

std::vector<GridPredictionRow> predict_grid(
    const ModelFit& fit, const GpData& data, const GridSpec& grid,
    const std::vector<long>& time_indices,
    const std::function<std::optional<double>(double, double)>& x1_at) {
    if (!(grid.step_deg > 0.0) || grid.lat1 < grid.lat0 || grid.lon1 < grid.lon0)
        throw std::invalid_argument("invalid grid specification");
    std::vector<double> lats, lons;
    for (double la = grid.lat0; la <= grid.lat1 + 1e-9; la += grid.step_deg) lats.push_back(la);
    for (double lo = grid.lon0; lo <= grid.lon1 + 1e-9; lo += grid.step_deg) lons.push_back(lo);

    std::vector<long> times = time_indices;
    if (times.empty()) {
        times.resize(static_cast<size_t>(data.n_times()));
        for (long t = 0; t < data.n_times(); ++t) times[static_cast<size_t>(t)] = t;
    }

    struct Node {
        double lat, lon, x1;
        bool covered;
    };
    std::vector<Node> nodes;
    std::vector<PredictionTarget> targets;
    for (double la : lats) {
        for (double lo : lons) {
            const std::optional<double> x1 = x1_at(la, lo);
            Node nd{la, lo, x1.value_or(0.0), x1.has_value()};
            nodes.push_back(nd);
            if (nd.covered) targets.push_back({la, lo, nd.x1});
        }
    }
    const std::vector<PredictionRow> preds = predict_gp(fit, data, targets, times);

    const double nanv = std::numeric_limits<double>::quiet_NaN();
    std::vector<GridPredictionRow> out;
    out.reserve(nodes.size() * times.size());
    size_t covered_idx = 0;
    for (const Node& nd : nodes) {
        if (!nd.covered) {
            for (long t : times) out.push_back({nd.lat, nd.lon, t, false, nanv, nanv, nanv});
            continue;
        }
        for (size_t j = 0; j < times.size(); ++j) {
            const PredictionRow& pr = preds[covered_idx * times.size() + j];
            out.push_back({nd.lat, nd.lon, pr.time_index, true, pr.mean_sqrt, pr.sd_sqrt,
                           pr.mean_ms});
        }
        ++covered_idx;
    }
    return out;
}

Eigen::VectorXd spatial_kriging_weights(const Eigen::MatrixXd& dist_sites,
                                        const Eigen::VectorXd& dist_target_km,
                                        const GpHyperParams& hyper,
                                        const std::vector<StationClass>& cls) {
    const long n = dist_sites.rows();
    if (dist_sites.cols() != n || dist_target_km.size() != n ||
        static_cast<long>(cls.size()) != n)
        throw std::invalid_argument("size mismatch");
    Eigen::MatrixXd c = spatial_covariance(dist_sites, hyper.phi, hyper.sigma_z);
    for (long i = 0; i < n; ++i) {
        const double s = hyper.sigma_for(cls[static_cast<size_t>(i)]);
        c(i, i) += s * s;
    }
    Eigen::VectorXd k(n);
    for (long i = 0; i < n; ++i) k[i] = matern_nu1(dist_target_km[i], hyper.phi, hyper.sigma_z);
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) throw std::runtime_error("covariance not positive definite");
    return llt.solve(k);
}

}  // namespace windfuse
