#pragma once

#include <Eigen/Dense>
#include <vector>

namespace windfuse {

// Cubic B-spline basis on uniform knots spanning [a, b]. Uniform knots keep
// linear functions in the null space of the second-difference coefficient
// penalty, which is what makes penalized fits reduce to straight lines when
// the data are linear. Outside [a, b] evaluation continues linearly from the
// boundary value and slope.
class BSplineBasis {
  public:
    static BSplineBasis make(double a, double b, int nbasis);

    int nbasis() const { return nbasis_; }
    double lo() const { return a_; }
    double hi() const { return b_; }

    Eigen::RowVectorXd eval(double x) const;
    Eigen::MatrixXd design(const std::vector<double>& x) const;

    // Second-difference penalty matrix D2' * D2, (nbasis x nbasis).
    Eigen::MatrixXd penalty() const;

    const std::vector<double>& knots() const { return knots_; }

  private:
    Eigen::RowVectorXd eval_interior(double x) const;
    Eigen::RowVectorXd eval_deriv_interior(double x) const;

    int nbasis_ = 0;
    double a_ = 0.0, b_ = 0.0;
    std::vector<double> knots_;  // nbasis + 4 uniform knots
};

// Penalized least squares y ~ intercept + spline(x) [+ linear extras], with
// the smoothing parameter chosen by generalized cross-validation over a log
// grid. Spline columns are centered over the training x so the intercept
// stays identifiable.
struct PenalizedSplineFit {
    BSplineBasis basis;
    double intercept = 0.0;
    Eigen::VectorXd spline_coef;   // nbasis
    Eigen::RowVectorXd col_means;  // centering applied to spline columns
    Eigen::VectorXd extra_coef;    // one per extra linear column
    double lambda = 0.0;           // chosen smoothing parameter
    double sigma_resid = 0.0;
    double edf = 0.0;              // effective degrees of freedom at lambda
    bool gcv_fallback = false;     // true when GCV failed and a mid-range
                                   // smoothing parameter was substituted

    // Centered smooth component only.
    double smooth_at(double x) const;
    double predict(double x, const Eigen::VectorXd& extras) const;
    double predict(double x) const;
};

PenalizedSplineFit fit_penalized_spline(const std::vector<double>& x,
                                        const std::vector<double>& y,
                                        const Eigen::MatrixXd& extras, int nbasis = 6);

// Fixed-lambda variant (used for the smoothing-monotonicity property and by
// the GCV scan itself).
PenalizedSplineFit fit_penalized_spline_fixed(const std::vector<double>& x,
                                              const std::vector<double>& y,
                                              const Eigen::MatrixXd& extras, int nbasis,
                                              double lambda);

}  // namespace windfuse
