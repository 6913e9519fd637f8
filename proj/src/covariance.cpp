#include "windfuse/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace windfuse {

namespace {

constexpr double kJitterRel = 1e-10;

void check_hyper(double phi, double sigma_z) {
    if (!(phi > 0.0) || !std::isfinite(phi) || !(sigma_z > 0.0) || !std::isfinite(sigma_z))
        throw std::invalid_argument("out-of-domain hyperparameters");
}

void check_rho(double rho) {
    if (!(rho > -1.0) || !(rho < 1.0)) throw std::invalid_argument("out-of-domain hyperparameters");
}

void check_nugget(const Eigen::VectorXd& nugget_var, int n) {
    if (nugget_var.size() != n) throw std::invalid_argument("nugget size mismatch");
    for (Eigen::Index i = 0; i < nugget_var.size(); ++i)
        if (!(nugget_var(i) > 0.0) || !std::isfinite(nugget_var(i)))
            throw std::invalid_argument("out-of-domain hyperparameters");
}

Eigen::MatrixXd slice_rhs(const SliceObs& s) {
    Eigen::MatrixXd u(s.y.size(), 1 + s.f.cols());
    u.col(0) = s.y;
    u.rightCols(s.f.cols()) = s.f;
    return u;
}

}  // namespace

double matern_nu1(double h_km, double phi_km, double sigma_z) {
    if (h_km < 0.0) throw std::invalid_argument("negative distance");
    check_hyper(phi_km, sigma_z);
    const double x = std::sqrt(8.0) / phi_km * h_km;
    if (x <= 1e-8) return sigma_z * sigma_z;
    if (x > 690.0) return 0.0;  // K1 underflows
    return sigma_z * sigma_z * x * std::cyl_bessel_k(1.0, x);
}

Eigen::MatrixXd spatial_covariance(const Eigen::MatrixXd& dist_km, double phi_km, double sigma_z) {
    if (dist_km.rows() != dist_km.cols()) throw std::invalid_argument("distance matrix not square");
    const Eigen::Index n = dist_km.rows();
    Eigen::MatrixXd s(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        s(i, i) = sigma_z * sigma_z * (1.0 + kJitterRel);
        for (Eigen::Index j = i + 1; j < n; ++j)
            s(i, j) = s(j, i) = matern_nu1(dist_km(i, j), phi_km, sigma_z);
    }
    return s;
}

bool StData::complete() const {
    for (const auto& s : slices)
        if (static_cast<int>(s.sites.size()) != n_sites) return false;
    return true;
}

StData make_st_data(const Eigen::MatrixXd& dist_km, const Eigen::MatrixXd& y,
                    const std::vector<Eigen::MatrixXd>& f_slices) {
    if (dist_km.rows() != y.rows()) throw std::invalid_argument("site count mismatch");
    if (static_cast<size_t>(y.cols()) != f_slices.size())
        throw std::invalid_argument("time count mismatch");
    StData d;
    d.dist_km = dist_km;
    d.n_sites = static_cast<int>(y.rows());
    d.n_cols = f_slices.empty() ? 0 : static_cast<int>(f_slices.front().cols());
    d.slices.resize(f_slices.size());
    for (size_t t = 0; t < f_slices.size(); ++t) {
        if (f_slices[t].rows() != y.rows() || f_slices[t].cols() != d.n_cols)
            throw std::invalid_argument("fixed-effect design shape mismatch");
        SliceObs& s = d.slices[t];
        for (int i = 0; i < d.n_sites; ++i)
            if (std::isfinite(y(i, static_cast<Eigen::Index>(t)))) s.sites.push_back(i);
        s.y.resize(static_cast<Eigen::Index>(s.sites.size()));
        s.f.resize(static_cast<Eigen::Index>(s.sites.size()), d.n_cols);
        for (size_t k = 0; k < s.sites.size(); ++k) {
            s.y(static_cast<Eigen::Index>(k)) = y(s.sites[k], static_cast<Eigen::Index>(t));
            s.f.row(static_cast<Eigen::Index>(k)) = f_slices[t].row(s.sites[k]);
        }
        d.n_obs += static_cast<long>(s.sites.size());
    }
    return d;
}

LikelihoodPieces igp_gram(const StData& d, double phi_km, double sigma_z,
                          const Eigen::VectorXd& nugget_var) {
    check_hyper(phi_km, sigma_z);
    check_nugget(nugget_var, d.n_sites);
    const Eigen::MatrixXd sigma = spatial_covariance(d.dist_km, phi_km, sigma_z);
    const int m = 1 + d.n_cols;

    LikelihoodPieces out;
    out.gram = Eigen::MatrixXd::Zero(m, m);
    out.n_obs = d.n_obs;

    std::map<std::vector<int>, Eigen::LLT<Eigen::MatrixXd>> cache;
    for (const auto& s : d.slices) {
        if (s.sites.empty()) continue;
        auto it = cache.find(s.sites);
        if (it == cache.end()) {
            const Eigen::Index k = static_cast<Eigen::Index>(s.sites.size());
            Eigen::MatrixXd c(k, k);
            for (Eigen::Index a = 0; a < k; ++a)
                for (Eigen::Index b = 0; b < k; ++b)
                    c(a, b) = sigma(s.sites[static_cast<size_t>(a)], s.sites[static_cast<size_t>(b)]);
            for (Eigen::Index a = 0; a < k; ++a) c(a, a) += nugget_var(s.sites[static_cast<size_t>(a)]);
            Eigen::LLT<Eigen::MatrixXd> llt(c);
            if (llt.info() != Eigen::Success)
                throw std::runtime_error("covariance not positive definite");
            it = cache.emplace(s.sites, std::move(llt)).first;
        }
        const Eigen::MatrixXd w = it->second.matrixL().solve(slice_rhs(s));
        out.gram.noalias() += w.transpose() * w;
        out.logdet += 2.0 * it->second.matrixLLT().diagonal().array().log().sum();
    }
    return out;
}

namespace {

// Channel decomposition for complete data: solve Sigma v = lambda D v so that
// V' D V = I and V' Sigma V = diag(lambda). The transformed slices split into
// independent scalar AR(1)-plus-white-noise channels.
struct Channels {
    Eigen::VectorXd lambda;
    Eigen::MatrixXd v;
};

Channels channelize(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& nugget_var) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(
        sigma, Eigen::MatrixXd(nugget_var.asDiagonal()));
    if (ges.info() != Eigen::Success)
        throw std::runtime_error("covariance not positive definite");
    Channels ch;
    ch.lambda = ges.eigenvalues();
    ch.v = ges.eigenvectors();
    if (!(ch.lambda.minCoeff() > 0.0))
        throw std::runtime_error("covariance not positive definite");
    return ch;
}

LikelihoodPieces ar1_gram_complete(const StData& d, const Eigen::MatrixXd& sigma, double rho,
                                   const Eigen::VectorXd& nugget_var) {
    const int n = d.n_sites, m = 1 + d.n_cols;
    const size_t tt = d.slices.size();
    const Channels ch = channelize(sigma, nugget_var);

    // Transform all slices once: rows become channels.
    std::vector<Eigen::MatrixXd> u(tt);
    for (size_t t = 0; t < tt; ++t) u[t] = ch.v.transpose() * slice_rhs(d.slices[t]);

    LikelihoodPieces out;
    out.gram = Eigen::MatrixXd::Zero(m, m);
    out.n_obs = d.n_obs;
    out.logdet = static_cast<double>(tt) * nugget_var.array().log().sum();

    Eigen::RowVectorXd mpred(m), e(m);
    for (int k = 0; k < n; ++k) {
        const double lam = ch.lambda(k);
        double ppred = lam;
        mpred.setZero();
        for (size_t t = 0; t < tt; ++t) {
            const double s = ppred + 1.0;
            e = u[t].row(k) - mpred;
            out.gram.noalias() += e.transpose() * e / s;
            out.logdet += std::log(s);
            const double gain = ppred / s;
            const double pfilt = (1.0 - gain) * ppred;
            mpred += gain * e;
            mpred *= rho;
            ppred = rho * rho * pfilt + lam * (1.0 - rho * rho);
        }
    }
    return out;
}

LikelihoodPieces ar1_gram_kalman(const StData& d, const Eigen::MatrixXd& sigma, double rho,
                                 const Eigen::VectorXd& nugget_var) {
    const int n = d.n_sites, m = 1 + d.n_cols;
    LikelihoodPieces out;
    out.gram = Eigen::MatrixXd::Zero(m, m);
    out.n_obs = d.n_obs;

    Eigen::MatrixXd p = sigma;                       // predicted state covariance
    Eigen::MatrixXd mm = Eigen::MatrixXd::Zero(n, m);  // predicted means per column
    for (const auto& s : d.slices) {
        if (!s.sites.empty()) {
            const Eigen::Index k = static_cast<Eigen::Index>(s.sites.size());
            Eigen::MatrixXd po(k, k), pall(n, k);
            for (Eigen::Index b = 0; b < k; ++b) {
                pall.col(b) = p.col(s.sites[static_cast<size_t>(b)]);
                for (Eigen::Index a = 0; a < k; ++a)
                    po(a, b) = p(s.sites[static_cast<size_t>(a)], s.sites[static_cast<size_t>(b)]);
            }
            Eigen::MatrixXd innov_cov = po;
            for (Eigen::Index a = 0; a < k; ++a)
                innov_cov(a, a) += nugget_var(s.sites[static_cast<size_t>(a)]);
            Eigen::LLT<Eigen::MatrixXd> llt(innov_cov);
            if (llt.info() != Eigen::Success)
                throw std::runtime_error("covariance not positive definite");

            Eigen::MatrixXd e = slice_rhs(s);
            for (Eigen::Index a = 0; a < k; ++a)
                e.row(a) -= mm.row(s.sites[static_cast<size_t>(a)]);

            const Eigen::MatrixXd sinv_e = llt.solve(e);
            out.gram.noalias() += e.transpose() * sinv_e;
            out.logdet += 2.0 * llt.matrixLLT().diagonal().array().log().sum();

            const Eigen::MatrixXd gain = llt.solve(pall.transpose()).transpose();  // n x k
            mm.noalias() += gain * e;
            p.noalias() -= gain * pall.transpose();
            p = 0.5 * (p + p.transpose()).eval();
        }
        mm *= rho;
        p = rho * rho * p + (1.0 - rho * rho) * sigma;
    }
    return out;
}

}  // namespace

LikelihoodPieces ar1_gram(const StData& d, double phi_km, double sigma_z, double rho,
                          const Eigen::VectorXd& nugget_var) {
    check_hyper(phi_km, sigma_z);
    check_rho(rho);
    check_nugget(nugget_var, d.n_sites);
    const Eigen::MatrixXd sigma = spatial_covariance(d.dist_km, phi_km, sigma_z);
    if (d.complete()) return ar1_gram_complete(d, sigma, rho, nugget_var);
    return ar1_gram_kalman(d, sigma, rho, nugget_var);
}

LatentPosterior igp_latent_posterior(const StData& d, double phi_km, double sigma_z,
                                     const Eigen::VectorXd& nugget_var,
                                     const Eigen::MatrixXd& resid) {
    check_hyper(phi_km, sigma_z);
    check_nugget(nugget_var, d.n_sites);
    const Eigen::MatrixXd sigma = spatial_covariance(d.dist_km, phi_km, sigma_z);
    const int n = d.n_sites;
    const size_t tt = d.slices.size();

    LatentPosterior out;
    out.mean = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(tt));
    out.cov.assign(tt, sigma);

    std::map<std::vector<int>, std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> cache;
    // cache: sites -> (cross = Sigma[:,obs] C^-1, cov = Sigma - cross Sigma[obs,:])
    for (size_t t = 0; t < tt; ++t) {
        const auto& s = d.slices[t];
        if (s.sites.empty()) continue;
        auto it = cache.find(s.sites);
        if (it == cache.end()) {
            const Eigen::Index k = static_cast<Eigen::Index>(s.sites.size());
            Eigen::MatrixXd c(k, k), cross0(n, k);
            for (Eigen::Index b = 0; b < k; ++b) {
                cross0.col(b) = sigma.col(s.sites[static_cast<size_t>(b)]);
                for (Eigen::Index a = 0; a < k; ++a)
                    c(a, b) = sigma(s.sites[static_cast<size_t>(a)], s.sites[static_cast<size_t>(b)]);
                c(b, b) += nugget_var(s.sites[static_cast<size_t>(b)]);
            }
            Eigen::LLT<Eigen::MatrixXd> llt(c);
            if (llt.info() != Eigen::Success)
                throw std::runtime_error("covariance not positive definite");
            Eigen::MatrixXd cross = llt.solve(cross0.transpose()).transpose();  // n x k
            Eigen::MatrixXd cov = sigma - cross * cross0.transpose();
            cov = 0.5 * (cov + cov.transpose()).eval();
            it = cache.emplace(s.sites, std::make_pair(std::move(cross), std::move(cov))).first;
        }
        Eigen::VectorXd r(static_cast<Eigen::Index>(s.sites.size()));
        for (size_t a = 0; a < s.sites.size(); ++a)
            r(static_cast<Eigen::Index>(a)) = resid(s.sites[a], static_cast<Eigen::Index>(t));
        out.mean.col(static_cast<Eigen::Index>(t)) = it->second.first * r;
        out.cov[t] = it->second.second;
    }
    return out;
}

namespace {

LatentPosterior ar1_latent_complete(const StData& d, const Eigen::MatrixXd& sigma, double rho,
                                    const Eigen::VectorXd& nugget_var,
                                    const Eigen::MatrixXd& resid) {
    const int n = d.n_sites;
    const size_t tt = d.slices.size();
    const Channels ch = channelize(sigma, nugget_var);

    // Transformed residual channels.
    Eigen::MatrixXd rt = ch.v.transpose() * resid;  // n x T

    Eigen::MatrixXd msm(n, static_cast<Eigen::Index>(tt));
    Eigen::MatrixXd psm(n, static_cast<Eigen::Index>(tt));
    std::vector<double> mpred(tt), ppred(tt), mfilt(tt), pfilt(tt);
    for (int k = 0; k < n; ++k) {
        const double lam = ch.lambda(k);
        double mp = 0.0, pp = lam;
        for (size_t t = 0; t < tt; ++t) {
            mpred[t] = mp;
            ppred[t] = pp;
            const double s = pp + 1.0;
            const double gain = pp / s;
            mfilt[t] = mp + gain * (rt(k, static_cast<Eigen::Index>(t)) - mp);
            pfilt[t] = (1.0 - gain) * pp;
            mp = rho * mfilt[t];
            pp = rho * rho * pfilt[t] + lam * (1.0 - rho * rho);
        }
        double ms = mfilt[tt - 1], ps = pfilt[tt - 1];
        msm(k, static_cast<Eigen::Index>(tt - 1)) = ms;
        psm(k, static_cast<Eigen::Index>(tt - 1)) = ps;
        for (size_t t = tt - 1; t-- > 0;) {
            const double j = pfilt[t] * rho / ppred[t + 1];
            ms = mfilt[t] + j * (ms - mpred[t + 1]);
            ps = pfilt[t] + j * j * (ps - ppred[t + 1]);
            msm(k, static_cast<Eigen::Index>(t)) = ms;
            psm(k, static_cast<Eigen::Index>(t)) = ps;
        }
    }

    // Back to site space: z_t = D V x_t.
    const Eigen::MatrixXd dv = nugget_var.asDiagonal() * ch.v;
    LatentPosterior out;
    out.mean = dv * msm;
    out.cov.resize(tt);
    for (size_t t = 0; t < tt; ++t)
        out.cov[t] = dv * psm.col(static_cast<Eigen::Index>(t)).asDiagonal() * dv.transpose();
    return out;
}

LatentPosterior ar1_latent_kalman(const StData& d, const Eigen::MatrixXd& sigma, double rho,
                                  const Eigen::VectorXd& nugget_var,
                                  const Eigen::MatrixXd& resid) {
    const int n = d.n_sites;
    const size_t tt = d.slices.size();

    std::vector<Eigen::VectorXd> mpred(tt), mfilt(tt);
    std::vector<Eigen::MatrixXd> ppred(tt), pfilt(tt);

    Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd p = sigma;
    for (size_t t = 0; t < tt; ++t) {
        mpred[t] = m;
        ppred[t] = p;
        const auto& s = d.slices[t];
        if (!s.sites.empty()) {
            const Eigen::Index k = static_cast<Eigen::Index>(s.sites.size());
            Eigen::MatrixXd po(k, k), pall(n, k);
            Eigen::VectorXd e(k);
            for (Eigen::Index b = 0; b < k; ++b) {
                const int sb = s.sites[static_cast<size_t>(b)];
                pall.col(b) = p.col(sb);
                e(b) = resid(sb, static_cast<Eigen::Index>(t)) - m(sb);
                for (Eigen::Index a = 0; a < k; ++a) po(a, b) = p(s.sites[static_cast<size_t>(a)], sb);
                po(b, b) += nugget_var(sb);
            }
            Eigen::LLT<Eigen::MatrixXd> llt(po);
            if (llt.info() != Eigen::Success)
                throw std::runtime_error("covariance not positive definite");
            const Eigen::MatrixXd gain = llt.solve(pall.transpose()).transpose();
            m += gain * e;
            p -= gain * pall.transpose();
            p = 0.5 * (p + p.transpose()).eval();
        }
        mfilt[t] = m;
        pfilt[t] = p;
        m *= rho;
        p = rho * rho * p + (1.0 - rho * rho) * sigma;
    }

    LatentPosterior out;
    out.mean.resize(n, static_cast<Eigen::Index>(tt));
    out.cov.resize(tt);
    Eigen::VectorXd ms = mfilt[tt - 1];
    Eigen::MatrixXd ps = pfilt[tt - 1];
    out.mean.col(static_cast<Eigen::Index>(tt - 1)) = ms;
    out.cov[tt - 1] = ps;
    for (size_t t = tt - 1; t-- > 0;) {
        Eigen::LLT<Eigen::MatrixXd> llt(ppred[t + 1]);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("covariance not positive definite");
        const Eigen::MatrixXd j = rho * llt.solve(pfilt[t]).transpose();  // pfilt rho ppred^-1
        ms = mfilt[t] + j * (ms - mpred[t + 1]);
        ps = pfilt[t] + j * (ps - ppred[t + 1]) * j.transpose();
        ps = 0.5 * (ps + ps.transpose()).eval();
        out.mean.col(static_cast<Eigen::Index>(t)) = ms;
        out.cov[t] = ps;
    }
    return out;
}

}  // namespace

LatentPosterior ar1_latent_posterior(const StData& d, double phi_km, double sigma_z, double rho,
                                     const Eigen::VectorXd& nugget_var,
                                     const Eigen::MatrixXd& resid) {
    check_hyper(phi_km, sigma_z);
    check_rho(rho);
    check_nugget(nugget_var, d.n_sites);
    const Eigen::MatrixXd sigma = spatial_covariance(d.dist_km, phi_km, sigma_z);
    if (d.complete()) return ar1_latent_complete(d, sigma, rho, nugget_var, resid);
    return ar1_latent_kalman(d, sigma, rho, nugget_var, resid);
}

Eigen::MatrixXd dense_joint_covariance(const StData& d, bool ar1, double phi_km, double sigma_z,
                                       double rho, const Eigen::VectorXd& nugget_var) {
    check_hyper(phi_km, sigma_z);
    if (ar1) check_rho(rho);
    check_nugget(nugget_var, d.n_sites);
    const Eigen::MatrixXd sigma = spatial_covariance(d.dist_km, phi_km, sigma_z);

    std::vector<std::pair<int, int>> entries;  // (time, site)
    for (size_t t = 0; t < d.slices.size(); ++t)
        for (int site : d.slices[t].sites) entries.emplace_back(static_cast<int>(t), site);

    const Eigen::Index nn = static_cast<Eigen::Index>(entries.size());
    Eigen::MatrixXd c(nn, nn);
    for (Eigen::Index a = 0; a < nn; ++a) {
        for (Eigen::Index b = a; b < nn; ++b) {
            const int dt = std::abs(entries[static_cast<size_t>(a)].first -
                                    entries[static_cast<size_t>(b)].first);
            const double tcor = ar1 ? std::pow(rho, dt) : (dt == 0 ? 1.0 : 0.0);
            double v = tcor * sigma(entries[static_cast<size_t>(a)].second,
                                    entries[static_cast<size_t>(b)].second);
            if (a == b) v += nugget_var(entries[static_cast<size_t>(a)].second);
            c(a, b) = c(b, a) = v;
        }
    }
    return c;
}

}  // namespace windfuse
