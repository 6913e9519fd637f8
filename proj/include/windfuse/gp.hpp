#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "windfuse/covariance.hpp"
#include "windfuse/dataset.hpp"
#include "windfuse/optim.hpp"
#include "windfuse/time_axis.hpp"
#include "windfuse/types.hpp"

namespace windfuse {

enum class GpVariant { Igp, Ar1 };

std::string to_string(GpVariant v);
GpVariant gp_variant_from_string(const std::string& s);

// Penalized-complexity priors. Rates are calibrated so that
// P(phi < 200) = 0.3, P(sigma_z > 0.75) = 0.5, P(sigma_eps > 0.75) = 0.1,
// P(rho > 0.8) = 0.7. The range prior is exponential on 1/phi.
struct PcPriors {
    double rate_inv_phi = 0.0;
    double rate_sigma_z = 0.0;
    double rate_sigma_eps = 0.0;  // shared by every nugget group
    double rate_sigma_d = 0.0;    // diurnal sd; same calibration as sigma_eps
    double theta_rho = 0.0;

    static PcPriors defaults();

    double log_phi(double phi) const;
    double log_sd(double s, double rate) const;
    double log_rho(double rho) const;

    double median_phi() const;
    double median_sigma_z() const;
    double median_sigma_eps() const;
    double median_sigma_d() const;
    double median_rho() const;
};

struct GpHyperParams {
    double phi = 0.0;      // effective range, km
    double sigma_z = 0.0;  // spatial sd
    std::array<double, kNumClasses> sigma_eps{};  // nugget sd per station class
    double sigma_d = 0.0;  // diurnal random-walk sd (0 = no diurnal effect)
    std::optional<double> rho;  // AR(1) correlation; absent for IGP

    double sigma_for(StationClass c) const { return sigma_eps[static_cast<size_t>(c)]; }
};

struct FixedEffects {
    double beta0 = 0.0;
    double beta1 = 0.0;
    std::array<double, 24> d{};  // diurnal levels, sum to zero
};

struct GpConfig {
    GpVariant variant = GpVariant::Igp;
    // Class -> nugget group (order Met, A, B, C, U). Groups with no stations
    // in the data contribute no free parameter.
    std::array<int, kNumClasses> class_group = {0, 1, 1, 1, 2};
    bool include_x1 = true;
    bool estimate_diurnal = true;
    bool compute_laplace = true;
    int max_iters = 500;
    double gtol = 1e-5;
};

// Model-scale observations ready for the covariance engines. In the real
// pipeline y holds sqrt(wind speed); the simulation study feeds its Gaussian
// field in directly.
struct GpData {
    std::vector<std::string> ids;
    std::vector<double> lat, lon;
    std::vector<StationClass> cls;
    Eigen::VectorXd x1;       // per-site covariate (ignored when !include_x1)
    EpochHour t0 = 0;
    Eigen::MatrixXd y;        // n x T, NaN = missing
    Eigen::MatrixXd dist_km;  // n x n

    int n_sites() const { return static_cast<int>(ids.size()); }
    long n_times() const { return static_cast<long>(y.cols()); }
    GpData without_site(int site) const;
};

GpData gp_data_from_dataset(const Dataset& ds, const std::map<std::string, double>& x1_by_station,
                            bool sqrt_transform = true);

struct ModelFit {
    GpVariant variant = GpVariant::Igp;
    GpConfig config;
    GpHyperParams hyper;
    FixedEffects fixed;
    double log_posterior = 0.0;         // transformed-space posterior at the MAP
    Eigen::MatrixXd laplace_cov;        // covariance of transformed parameters
    std::vector<std::string> param_names;  // transformed-parameter layout
};

// The exact objective fit_gp minimizes: negative log posterior over
// transformed hyperparameters (log scales; rho through tanh(zeta/2)),
// Jacobian included.
struct MapObjective {
    ObjectiveFn fn;
    std::vector<std::string> names;
    Eigen::VectorXd eta_median;  // prior medians, transformed
    std::function<GpHyperParams(const Eigen::VectorXd&)> decode;
};

MapObjective make_map_objective(const GpData& data, const GpConfig& config,
                                const PcPriors& priors);

// Gaussian log density of the observations given explicit fixed effects (no
// priors, no integration).
double log_likelihood_joint(const GpHyperParams& hyper, const FixedEffects& fixed,
                            const GpData& data, const GpConfig& config);

// log_likelihood_joint plus the diurnal-level prior and hyperparameter
// priors, all on the natural scale.
double log_posterior_joint(const GpHyperParams& hyper, const FixedEffects& fixed,
                           const GpData& data, const GpConfig& config, const PcPriors& priors);

// Marginal posterior of the hyperparameters: fixed effects and diurnal
// coefficients integrated out (flat prior on beta, RW1 prior on the diurnal).
double log_posterior(const GpHyperParams& hyper, const GpData& data, const GpConfig& config,
                     const PcPriors& priors);

ModelFit fit_gp(const GpData& data, const GpConfig& config,
                const PcPriors& priors = PcPriors::defaults());

// GLS/BLUP fixed-effect estimate at fixed hyperparameters. What fit_gp runs
// at the MAP; exposed so cross-validation can re-estimate coefficients per
// fold without refitting the hyperparameters.
FixedEffects estimate_fixed_effects(const GpHyperParams& hyper, const GpData& data,
                                    const GpConfig& config);

struct PredictionTarget {
    double lat = 0.0, lon = 0.0;
    double x1 = 0.0;
};

struct PredictionRow {
    int target = 0;
    long time_index = 0;
    double mean_sqrt = 0.0;
    double sd_sqrt = 0.0;
    double mean_ms = 0.0;  // mean_sqrt^2 + sd_sqrt^2
};

// Posterior mean and latent conditional sd at each (target, time). Time
// indices are columns of data.y; empty means all of them.
std::vector<PredictionRow> predict_gp(const ModelFit& fit, const GpData& data,
                                      const std::vector<PredictionTarget>& targets,
                                      const std::vector<long>& time_indices = {});

struct GridSpec {
    double lat0 = 0.0, lat1 = 0.0, lon0 = 0.0, lon1 = 0.0;
    double step_deg = 0.025;
};

struct GridPredictionRow {
    double lat = 0.0, lon = 0.0;
    long time_index = 0;
    bool covered = false;  // false: node outside covariate coverage, values NaN
    double mean_sqrt = 0.0, sd_sqrt = 0.0, mean_ms = 0.0;
};

// x1_at returns the covariate at a node, or nothing when the node is outside
// the covariate field's coverage.
std::vector<GridPredictionRow> predict_grid(
    const ModelFit& fit, const GpData& data, const GridSpec& grid,
    const std::vector<long>& time_indices,
    const std::function<std::optional<double>(double lat, double lon)>& x1_at);

// Single-slice kriging weights w = C^-1 k toward a target, where C is the
// spatial covariance among sites plus per-site nugget and k the target cross
// covariance. The posterior mean contribution is w . residuals.
Eigen::VectorXd spatial_kriging_weights(const Eigen::MatrixXd& dist_sites,
                                        const Eigen::VectorXd& dist_target_km,
                                        const GpHyperParams& hyper,
                                        const std::vector<StationClass>& cls);

}  // namespace windfuse
