#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>

namespace windfuse {

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;

// Central finite differences with per-coordinate steps scaled by |x_i|.
// These are the gradient estimates the optimizer itself works from.
Eigen::VectorXd fd_gradient(const ObjectiveFn& f, const Eigen::VectorXd& x, double h_rel = 1e-5);
Eigen::MatrixXd fd_hessian(const ObjectiveFn& f, const Eigen::VectorXd& x, double h_rel = 1e-4);

struct MinimizeOptions {
    double gtol = 1e-5;     // gradient norm tolerance at the minimizer
    int max_iters = 500;    // combined simplex + Newton iteration budget
    double initial_step = 0.25;
};

struct OptimResult {
    Eigen::VectorXd x;
    double value = 0.0;
    Eigen::VectorXd gradient;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Thrown when no start reaches the gradient tolerance; carries the best
// point seen so the caller can still report it.
class NonConvergenceError : public std::runtime_error {
  public:
    NonConvergenceError(const std::string& msg, OptimResult best)
        : std::runtime_error(msg), best_(std::move(best)) {}
    const OptimResult& best() const { return best_; }

  private:
    OptimResult best_;
};

// Derivative-free descent (Nelder-Mead) followed by a finite-difference
// Newton polish. Never throws on non-convergence; check `converged`.
OptimResult minimize(const ObjectiveFn& f, const Eigen::VectorXd& x0,
                     const MinimizeOptions& opts = {});

// Runs minimize from each start and returns the converged result with the
// lowest value. Throws NonConvergenceError when every start fails.
OptimResult minimize_multistart(const ObjectiveFn& f, const std::vector<Eigen::VectorXd>& starts,
                                const MinimizeOptions& opts = {});

// Inverse of a symmetric matrix with eigenvalues clamped to a small positive
// floor, so the result is always symmetric positive semidefinite.
Eigen::MatrixXd inverse_psd_projected(const Eigen::MatrixXd& h);

}  // namespace windfuse
