#pragma once

#include <Eigen/Dense>
#include <vector>

namespace windfuse {

// Matern covariance with smoothness 1: sigma_z^2 (kh) K_1(kh), k = sqrt(8)/phi,
// continuous limit sigma_z^2 at h = 0. phi is the effective range (correlation
// has dropped to about 0.14 there).
double matern_nu1(double h_km, double phi_km, double sigma_z);

// Spatial covariance among sites plus a 1e-10 sigma_z^2 diagonal jitter. The
// jitter is part of the model definition here, so every code path (dense
// oracle, slice solver, Kalman filter) shares one matrix.
Eigen::MatrixXd spatial_covariance(const Eigen::MatrixXd& dist_km, double phi_km, double sigma_z);

// Observations of one time slice: observed site indices (ascending), values,
// and the fixed-effect design rows for those sites.
struct SliceObs {
    std::vector<int> sites;
    Eigen::VectorXd y;
    Eigen::MatrixXd f;
};

// Spatio-temporal observation layout shared by the likelihood engines.
struct StData {
    Eigen::MatrixXd dist_km;       // n x n
    std::vector<SliceObs> slices;  // one per time step, consecutive hours
    int n_sites = 0;
    int n_cols = 0;  // fixed-effect columns
    long n_obs = 0;

    bool complete() const;  // every slice observes every site
};

StData make_st_data(const Eigen::MatrixXd& dist_km, const Eigen::MatrixXd& y,
                    const std::vector<Eigen::MatrixXd>& f_slices);

// Whitened cross-products of [y F] against the observation covariance:
// gram = [y F]' C^{-1} [y F], plus log|C|. Everything a marginal Gaussian
// likelihood with linear fixed effects needs.
struct LikelihoodPieces {
    Eigen::MatrixXd gram;
    double logdet = 0.0;
    long n_obs = 0;
};

// Independent time slices: C is block-diagonal, one spatial block per slice.
LikelihoodPieces igp_gram(const StData& d, double phi_km, double sigma_z,
                          const Eigen::VectorXd& nugget_var);

// Separable AR(1) in time. Complete data uses the generalized-eigen channel
// decomposition (exact, O(n^3 + n^2 T)); gaps fall back to a vector Kalman
// filter over the n-site latent state.
LikelihoodPieces ar1_gram(const StData& d, double phi_km, double sigma_z, double rho,
                          const Eigen::VectorXd& nugget_var);

// Posterior moments of the latent field given residuals (observed minus fixed
// effects): mean (n x T) and per-slice covariance. AR1 smooths over time; IGP
// conditions within each slice.
struct LatentPosterior {
    Eigen::MatrixXd mean;
    std::vector<Eigen::MatrixXd> cov;
};

LatentPosterior igp_latent_posterior(const StData& d, double phi_km, double sigma_z,
                                     const Eigen::VectorXd& nugget_var,
                                     const Eigen::MatrixXd& resid);
LatentPosterior ar1_latent_posterior(const StData& d, double phi_km, double sigma_z, double rho,
                                     const Eigen::VectorXd& nugget_var,
                                     const Eigen::MatrixXd& resid);

// Dense covariance of the observed stack in slice-major order (times outer,
// observed sites inner). Small problems only; the brute-force oracle the
// engines are tested against.
Eigen::MatrixXd dense_joint_covariance(const StData& d, bool ar1, double phi_km, double sigma_z,
                                       double rho, const Eigen::VectorXd& nugget_var);

}  // namespace windfuse
