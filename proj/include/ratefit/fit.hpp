#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "ratefit/types.hpp"

namespace ratefit {

/// Result of a damped least-squares fit. params/covariance are in the same
/// (internal, angular) units the model was formulated in; one-sigma errors
/// are the square roots of the covariance diagonal.
struct FitResult {
    std::vector<std::string> names;
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;
    double residual_norm = 0.0;  // weighted chi-square at the optimum
    int n_iter = 0;
    bool converged = false;
    std::size_t n_points = 0;
    std::vector<std::string> warnings;

    double value(const std::string& name) const;
    double sigma(const std::string& name) const;
    Uncertain get(const std::string& name) const;
    int index(const std::string& name) const;
    bool has(const std::string& name) const;
};

/// Residual vector r(p); the fit minimizes r^T r. Residuals are expected to
/// be noise-weighted by the caller.
using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
/// Optional analytic Jacobian dr_i/dp_j.
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct FitOptions {
    int max_iter = 400;
    double ftol = 1e-12;   // relative chi-square decrease
    double xtol = 1e-13;   // relative step size
    double gtol = 0.0;     // gradient inf-norm; 0 = scale automatically
    Eigen::VectorXd lower;  // empty = unbounded
    Eigen::VectorXd upper;
};

/// Levenberg-Marquardt minimizer with Marquardt diagonal scaling. The
/// covariance is (J^T J)^-1 scaled by the reduced chi-square at the optimum.
/// Non-convergence is reported through the converged flag, not an exception;
/// a rank-deficient Jacobian at the optimum throws RankDeficiencyError
/// naming the unidentifiable parameter directions.
FitResult damped_least_squares(const ResidualFn& residuals,
                               const Eigen::VectorXd& init,
                               const std::vector<std::string>& names,
                               const JacobianFn& jacobian = nullptr,
                               const FitOptions& options = {});

/// Central-difference Jacobian with step max(1e-8, 1e-6 |p_j|); when a scale
/// vector is given (the engine passes the initial guess) it floors the step
/// for parameters crossing zero.
Eigen::MatrixXd finite_difference_jacobian(const ResidualFn& residuals,
                                           const Eigen::VectorXd& p,
                                           const Eigen::VectorXd& scale = {});

/// Weighted curve-fit convenience wrapper: residual_i = (f(x_i, p) - y_i)/s_i.
struct CurveData {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> sigma;  // empty = unweighted
};

using ModelFn = std::function<double(double x, const Eigen::VectorXd& p)>;
/// df/dp at one sample; filled into the Jacobian row.
using ModelGradFn =
    std::function<void(double x, const Eigen::VectorXd& p, Eigen::VectorXd& grad)>;

FitResult fit_curve(const ModelFn& model, const CurveData& data,
                    const Eigen::VectorXd& init,
                    const std::vector<std::string>& names,
                    const ModelGradFn& grad = nullptr,
                    const FitOptions& options = {});

/// Scalar minimizer (golden-section) on [a, b].
double golden_section_min(const std::function<double(double)>& f, double a,
                          double b, double tol);

/// Upper regularized incomplete gamma Q(a, x); chi-square tail probability is
/// Q(dof/2, chi2/2).
double gamma_q(double a, double x);

/// First-order variance propagation of a derived quantity g(p) using the fit
/// covariance: grad^T C grad.
double propagate_variance(const Eigen::MatrixXd& cov, const Eigen::VectorXd& grad);

}  // namespace ratefit
