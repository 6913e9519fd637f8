#include "windfuse/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace windfuse {

namespace {

double step_for(double xi, double h_rel) { return h_rel * std::max(1.0, std::abs(xi)); }

// Nelder-Mead with standard coefficients. Returns the best vertex after at
// most max_iters reflections or once the simplex collapses.
struct SimplexOut {
    Eigen::VectorXd x;
    double value;
    int iterations;
};

SimplexOut nelder_mead(const ObjectiveFn& f, const Eigen::VectorXd& x0, double step,
                       int max_iters) {
    const int n = static_cast<int>(x0.size());
    std::vector<Eigen::VectorXd> v(static_cast<size_t>(n) + 1, x0);
    std::vector<double> fv(static_cast<size_t>(n) + 1);
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) + 1](i) += step_for(x0(i), step);
    for (size_t i = 0; i < v.size(); ++i) fv[i] = f(v[i]);

    std::vector<size_t> ord(v.size());
    int iter = 0;
    for (; iter < max_iters; ++iter) {
        for (size_t i = 0; i < ord.size(); ++i) ord[i] = i;
        std::sort(ord.begin(), ord.end(), [&](size_t a, size_t b) { return fv[a] < fv[b]; });
        const size_t ibest = ord.front(), iworst = ord.back(), isecond = ord[ord.size() - 2];

        const double fspread = std::abs(fv[iworst] - fv[ibest]);
        double xspread = 0.0;
        for (size_t i = 0; i < v.size(); ++i) xspread = std::max(xspread, (v[i] - v[ibest]).norm());
        if (fspread < 1e-12 * (1.0 + std::abs(fv[ibest])) && xspread < 1e-9 * (1.0 + v[ibest].norm()))
            break;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (size_t i = 0; i < v.size(); ++i)
            if (i != iworst) centroid += v[i];
        centroid /= static_cast<double>(n);

        const Eigen::VectorXd xr = centroid + (centroid - v[iworst]);
        const double fr = f(xr);
        if (fr < fv[ibest]) {
            const Eigen::VectorXd xe = centroid + 2.0 * (centroid - v[iworst]);
            const double fe = f(xe);
            if (fe < fr) {
                v[iworst] = xe;
                fv[iworst] = fe;
            } else {
                v[iworst] = xr;
                fv[iworst] = fr;
            }
            continue;
        }
        if (fr < fv[isecond]) {
            v[iworst] = xr;
            fv[iworst] = fr;
            continue;
        }
        const bool outside = fr < fv[iworst];
        const Eigen::VectorXd xc = outside
                                       ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                       : Eigen::VectorXd(centroid - 0.5 * (centroid - v[iworst]));
        const double fc = f(xc);
        if (fc < std::min(fr, fv[iworst])) {
            v[iworst] = xc;
            fv[iworst] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        for (size_t i = 0; i < v.size(); ++i) {
            if (i == ibest) continue;
            v[i] = v[ibest] + 0.5 * (v[i] - v[ibest]);
            fv[i] = f(v[i]);
        }
    }
    size_t ib = 0;
    for (size_t i = 1; i < v.size(); ++i)
        if (fv[i] < fv[ib]) ib = i;
    return {v[ib], fv[ib], iter};
}

}  // namespace

Eigen::VectorXd fd_gradient(const ObjectiveFn& f, const Eigen::VectorXd& x, double h_rel) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = step_for(x(i), h_rel);
        xp(i) = x(i) + h;
        const double fp = f(xp);
        xp(i) = x(i) - h;
        const double fm = f(xp);
        xp(i) = x(i);
        g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
}

Eigen::MatrixXd fd_hessian(const ObjectiveFn& f, const Eigen::VectorXd& x, double h_rel) {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd h(n, n);
    const double f0 = f(x);
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double hi = step_for(x(i), h_rel);
        xp(i) = x(i) + hi;
        const double fp = f(xp);
        xp(i) = x(i) - hi;
        const double fm = f(xp);
        xp(i) = x(i);
        h(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const double hi = step_for(x(i), h_rel);
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double hj = step_for(x(j), h_rel);
            xp = x;
            xp(i) += hi;
            xp(j) += hj;
            const double fpp = f(xp);
            xp(j) = x(j) - hj;
            const double fpm = f(xp);
            xp(i) = x(i) - hi;
            xp(j) = x(j) + hj;
            const double fmp = f(xp);
            xp(j) = x(j) - hj;
            const double fmm = f(xp);
            h(i, j) = h(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
        }
    }
    return h;
}

OptimResult minimize(const ObjectiveFn& f, const Eigen::VectorXd& x0,
                     const MinimizeOptions& opts) {
    const int nm_budget = std::max(1, (opts.max_iters * 3) / 5);
    SimplexOut nm = nelder_mead(f, x0, opts.initial_step, nm_budget);

    OptimResult res;
    res.x = nm.x;
    res.value = nm.value;
    res.iterations = nm.iterations;
    res.gradient = fd_gradient(f, res.x);
    res.grad_norm = res.gradient.norm();

    // Newton polish on the finite-difference Hessian; eigenvalues are
    // clamped so the step is always a descent direction.
    while (res.grad_norm > opts.gtol && res.iterations < opts.max_iters) {
        const Eigen::MatrixXd h = fd_hessian(f, res.x);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
        const Eigen::VectorXd ev = es.eigenvalues();
        const double floor_val = std::max(1e-8, 1e-8 * ev.cwiseAbs().maxCoeff());
        Eigen::VectorXd inv = ev;
        for (Eigen::Index i = 0; i < inv.size(); ++i)
            inv(i) = 1.0 / std::max(ev(i), floor_val);
        const Eigen::VectorXd dir =
            -(es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose() * res.gradient);

        const double slope = res.gradient.dot(dir);  // negative for a descent direction
        double alpha = 1.0;
        bool moved = false;
        while (alpha > 1e-12) {
            const Eigen::VectorXd xt = res.x + alpha * dir;
            const double ft = f(xt);
            if (std::isfinite(ft) && ft <= res.value + 1e-4 * alpha * slope) {
                res.x = xt;
                res.value = ft;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        ++res.iterations;
        res.gradient = fd_gradient(f, res.x);
        res.grad_norm = res.gradient.norm();
        if (!moved) break;
    }
    res.converged = res.grad_norm <= opts.gtol;
    return res;
}

OptimResult minimize_multistart(const ObjectiveFn& f, const std::vector<Eigen::VectorXd>& starts,
                                const MinimizeOptions& opts) {
    if (starts.empty()) throw std::invalid_argument("no starts given");
    bool any_converged = false;
    OptimResult best_converged, best_any;
    best_converged.value = best_any.value = std::numeric_limits<double>::infinity();
    for (const auto& s : starts) {
        const OptimResult r = minimize(f, s, opts);
        if (r.value < best_any.value) best_any = r;
        if (r.converged && r.value < best_converged.value) {
            best_converged = r;
            any_converged = true;
        }
    }
    if (any_converged) return best_converged;
    throw NonConvergenceError(
        "optimizer did not converge: gradient norm " + std::to_string(best_any.grad_norm) +
            " above tolerance after " + std::to_string(best_any.iterations) +
            " iterations; best objective " + std::to_string(best_any.value) +
            " at best-so-far point reported",
        best_any);
}

Eigen::MatrixXd inverse_psd_projected(const Eigen::MatrixXd& h) {
    const Eigen::MatrixXd sym = 0.5 * (h + h.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    Eigen::VectorXd ev = es.eigenvalues();
    const double mx = std::max(1e-300, ev.cwiseAbs().maxCoeff());
    Eigen::VectorXd inv(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) inv(i) = 1.0 / std::max(ev(i), 1e-10 * mx);
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace windfuse
