#include "windfuse/spline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace windfuse {

namespace {

// All basis functions of the given degree that are nonzero on the knot
// interval containing x. On exit out[r] = B_{m-degree+r, degree}(x).
void basis_funs(const std::vector<double>& knots, int m, int degree, double x, double* out) {
    double left[4], right[4];
    out[0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
        left[j] = x - knots[static_cast<size_t>(m + 1 - j)];
        right[j] = knots[static_cast<size_t>(m + j)] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

}  // namespace

BSplineBasis BSplineBasis::make(double a, double b, int nbasis) {
    if (!(b > a)) throw std::invalid_argument("degenerate design");
    if (nbasis < 4) throw std::invalid_argument("need at least 4 basis functions");
    BSplineBasis s;
    s.nbasis_ = nbasis;
    s.a_ = a;
    s.b_ = b;
    const double h = (b - a) / static_cast<double>(nbasis - 3);
    s.knots_.resize(static_cast<size_t>(nbasis) + 4);
    for (int j = 0; j < nbasis + 4; ++j)
        s.knots_[static_cast<size_t>(j)] = a + (j - 3) * h;
    return s;
}

Eigen::RowVectorXd BSplineBasis::eval_interior(double x) const {
    const double h = knots_[1] - knots_[0];
    int m = 3 + static_cast<int>(std::floor((x - a_) / h));
    m = std::clamp(m, 3, nbasis_ - 1);
    double vals[4];
    basis_funs(knots_, m, 3, x, vals);
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nbasis_);
    for (int r = 0; r <= 3; ++r) row(m - 3 + r) = vals[r];
    return row;
}

Eigen::RowVectorXd BSplineBasis::eval_deriv_interior(double x) const {
    const double h = knots_[1] - knots_[0];
    int m = 3 + static_cast<int>(std::floor((x - a_) / h));
    m = std::clamp(m, 3, nbasis_ - 1);
    double q[3];
    basis_funs(knots_, m, 2, x, q);  // q[r] = B_{m-2+r,2}(x)
    // B'_{i,3} = (B_{i,2} - B_{i+1,2}) / h on uniform knots.
    Eigen::RowVectorXd quad = Eigen::RowVectorXd::Zero(nbasis_ + 1);
    for (int r = 0; r <= 2; ++r) quad(m - 2 + r) = q[r];
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nbasis_);
    for (int i = std::max(0, m - 3); i <= m; ++i) row(i) = (quad(i) - quad(i + 1)) / h;
    return row;
}

Eigen::RowVectorXd BSplineBasis::eval(double x) const {
    if (x < a_) return eval_interior(a_) + (x - a_) * eval_deriv_interior(a_);
    if (x > b_) return eval_interior(b_) + (x - b_) * eval_deriv_interior(b_);
    return eval_interior(x);
}

Eigen::MatrixXd BSplineBasis::design(const std::vector<double>& x) const {
    Eigen::MatrixXd B(static_cast<Eigen::Index>(x.size()), nbasis_);
    for (size_t i = 0; i < x.size(); ++i) B.row(static_cast<Eigen::Index>(i)) = eval(x[i]);
    return B;
}

Eigen::MatrixXd BSplineBasis::penalty() const {
    Eigen::MatrixXd D2 = Eigen::MatrixXd::Zero(nbasis_ - 2, nbasis_);
    for (int i = 0; i < nbasis_ - 2; ++i) {
        D2(i, i) = 1.0;
        D2(i, i + 1) = -2.0;
        D2(i, i + 2) = 1.0;
    }
    return D2.transpose() * D2;
}

double PenalizedSplineFit::smooth_at(double x) const {
    return (basis.eval(x) - col_means) * spline_coef;
}

double PenalizedSplineFit::predict(double x, const Eigen::VectorXd& extras) const {
    if (extras.size() != extra_coef.size())
        throw std::invalid_argument("wrong number of extra covariates");
    return intercept + smooth_at(x) + extras.dot(extra_coef);
}

double PenalizedSplineFit::predict(double x) const {
    if (extra_coef.size() != 0) throw std::invalid_argument("wrong number of extra covariates");
    return intercept + smooth_at(x);
}

PenalizedSplineFit fit_penalized_spline_fixed(const std::vector<double>& x,
                                              const std::vector<double>& y,
                                              const Eigen::MatrixXd& extras, int nbasis,
                                              double lambda) {
    const Eigen::Index n = static_cast<Eigen::Index>(x.size());
    if (y.size() != x.size()) throw std::invalid_argument("x and y length mismatch");
    if (extras.cols() > 0 && extras.rows() != n)
        throw std::invalid_argument("extras row count mismatch");
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    if (!(*mx > *mn)) throw std::invalid_argument("degenerate design");

    PenalizedSplineFit fit;
    fit.basis = BSplineBasis::make(*mn, *mx, nbasis);
    fit.lambda = lambda;

    const Eigen::Index nb = nbasis, ne = extras.cols(), p = 1 + nb + ne;
    if (n <= p - nb + 1) throw std::invalid_argument("too few observations");

    Eigen::MatrixXd B = fit.basis.design(x);
    fit.col_means = B.colwise().mean();
    B.rowwise() -= fit.col_means;

    Eigen::MatrixXd X(n, p);
    X.col(0).setOnes();
    X.middleCols(1, nb) = B;
    if (ne > 0) X.rightCols(ne) = extras;

    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(p, p);
    P.block(1, 1, nb, nb) = fit.basis.penalty();

    const Eigen::MatrixXd XtX = X.transpose() * X;
    Eigen::MatrixXd M = XtX + lambda * P;
    const double ridge = 1e-12 * (1.0 + XtX.diagonal().mean());
    M.diagonal().array() += ridge;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    if (ldlt.info() != Eigen::Success) throw std::runtime_error("singular design");
    Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
    const Eigen::VectorXd theta = ldlt.solve(X.transpose() * yv);

    fit.intercept = theta(0);
    fit.spline_coef = theta.segment(1, nb);
    fit.extra_coef = theta.tail(ne);
    fit.edf = ldlt.solve(XtX).trace();

    const double rss = (yv - X * theta).squaredNorm();
    const double denom = std::max(1.0, static_cast<double>(n) - fit.edf);
    fit.sigma_resid = std::sqrt(rss / denom);
    return fit;
}

PenalizedSplineFit fit_penalized_spline(const std::vector<double>& x,
                                        const std::vector<double>& y,
                                        const Eigen::MatrixXd& extras, int nbasis) {
    const double n = static_cast<double>(x.size());
    double best_gcv = std::numeric_limits<double>::infinity();
    double best_lambda = std::numeric_limits<double>::quiet_NaN();
    // Quarter-decade grid over [1e-6, 1e8].
    for (int g = 0; g <= 56; ++g) {
        const double lam = std::pow(10.0, -6.0 + 0.25 * g);
        PenalizedSplineFit f;
        try {
            f = fit_penalized_spline_fixed(x, y, extras, nbasis, lam);
        } catch (const std::runtime_error&) {
            continue;
        }
        const double dof = n - f.edf;
        if (!(dof > 1e-6)) continue;
        const double rss = f.sigma_resid * f.sigma_resid * std::max(1.0, dof);
        const double gcv = n * rss / (dof * dof);
        if (std::isfinite(gcv) && gcv <= best_gcv) {
            best_gcv = gcv;
            best_lambda = lam;
        }
    }
    if (std::isfinite(best_lambda)) return fit_penalized_spline_fixed(x, y, extras, nbasis, best_lambda);
    // GCV failed everywhere; fall back to the grid midpoint.
    PenalizedSplineFit f = fit_penalized_spline_fixed(x, y, extras, nbasis, 10.0);
    f.gcv_fallback = true;
    return f;
}

}  // namespace windfuse
