#include "ratefit/fit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ratefit/errors.hpp"

namespace ratefit {

double FitResult::value(const std::string& name) const {
    return params[index(name)];
}

double FitResult::sigma(const std::string& name) const {
    const int i = index(name);
    return std::sqrt(std::max(0.0, covariance(i, i)));
}

Uncertain FitResult::get(const std::string& name) const {
    return Uncertain{value(name), sigma(name)};
}

int FitResult::index(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    throw InvalidInput("FitResult: unknown parameter '" + name + "'");
}

bool FitResult::has(const std::string& name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
}

Eigen::MatrixXd finite_difference_jacobian(const ResidualFn& residuals,
                                           const Eigen::VectorXd& p,
                                           const Eigen::VectorXd& scale) {
    const Eigen::VectorXd r0 = residuals(p);
    Eigen::MatrixXd j(r0.size(), p.size());
    Eigen::VectorXd q = p;
    for (int k = 0; k < p.size(); ++k) {
        // The parameter's own magnitude sets the step; the initial-guess
        // magnitude keeps it sane when the current value crosses zero.
        double mag = std::abs(p[k]);
        if (scale.size() == p.size()) mag = std::max(mag, std::abs(scale[k]));
        const double h = std::max(1e-8, 1e-6 * mag);
        q[k] = p[k] + h;
        const Eigen::VectorXd rp = residuals(q);
        q[k] = p[k] - h;
        const Eigen::VectorXd rm = residuals(q);
        q[k] = p[k];
        j.col(k) = (rp - rm) / (2.0 * h);
    }
    return j;
}

namespace {

void clamp_to_bounds(Eigen::VectorXd& p, const FitOptions& opt) {
    if (opt.lower.size() == p.size())
        p = p.cwiseMax(opt.lower);
    if (opt.upper.size() == p.size())
        p = p.cwiseMin(opt.upper);
}

/// Names of the parameters dominating the near-null singular directions.
std::string null_direction_names(const Eigen::MatrixXd& j,
                                 const std::vector<std::string>& names,
                                 double threshold) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(j, Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    std::ostringstream out;
    bool first = true;
    for (int k = 0; k < s.size(); ++k) {
        if (s[k] > threshold * s[0]) continue;
        const Eigen::VectorXd v = svd.matrixV().col(k).cwiseAbs();
        for (int i = 0; i < v.size(); ++i) {
            if (v[i] < 0.3) continue;
            if (!first) out << ", ";
            out << names[i];
            first = false;
        }
    }
    return out.str();
}

}  // namespace

FitResult damped_least_squares(const ResidualFn& residuals,
                               const Eigen::VectorXd& init,
                               const std::vector<std::string>& names,
                               const JacobianFn& jacobian,
                               const FitOptions& options) {
    if (static_cast<std::size_t>(init.size()) != names.size())
        throw InvalidInput("damped_least_squares: init/name size mismatch");

    Eigen::VectorXd p = init;
    clamp_to_bounds(p, options);
    auto jac = [&](const Eigen::VectorXd& q) {
        return jacobian ? jacobian(q)
                        : finite_difference_jacobian(residuals, q, init);
    };

    Eigen::VectorXd r = residuals(p);
    if (r.size() < p.size())
        throw InvalidInput("damped_least_squares: fewer residuals than parameters");
    double chi2 = r.squaredNorm();

    Eigen::MatrixXd j = jac(p);
    Eigen::MatrixXd jtj = j.transpose() * j;
    Eigen::VectorXd g = j.transpose() * r;

    const double gtol =
        options.gtol > 0.0 ? options.gtol
                           : 1e-14 * std::max(1.0, g.cwiseAbs().maxCoeff());

    double mu = 1e-3 * jtj.diagonal().maxCoeff();
    if (!(mu > 0.0)) mu = 1e-3;
    double nu = 2.0;

    FitResult out;
    out.names = names;
    out.n_points = static_cast<std::size_t>(r.size());
    bool converged = false;
    int iter = 0;

    // A coordinate pinned at a bound with the gradient pointing outward is
    // frozen for the iteration (active set); otherwise projected steps crawl
    // along the bound without ever meeting the step tolerance.
    auto active_mask = [&](const Eigen::VectorXd& q,
                           const Eigen::VectorXd& grad) {
        std::vector<bool> active(q.size(), false);
        for (int i = 0; i < q.size(); ++i) {
            if (options.lower.size() == q.size() && q[i] <= options.lower[i] &&
                grad[i] > 0.0)
                active[i] = true;
            if (options.upper.size() == q.size() && q[i] >= options.upper[i] &&
                grad[i] < 0.0)
                active[i] = true;
        }
        return active;
    };

    for (; iter < options.max_iter; ++iter) {
        const std::vector<bool> active = active_mask(p, g);
        double proj_g = 0.0;
        for (int i = 0; i < p.size(); ++i)
            if (!active[i]) proj_g = std::max(proj_g, std::abs(g[i]));
        if (proj_g <= gtol) {
            converged = true;
            break;
        }
        std::vector<int> free;
        for (int i = 0; i < p.size(); ++i)
            if (!active[i]) free.push_back(i);

        // Marquardt scaling keeps the damping meaningful across parameters of
        // very different magnitude (rates ~1e6 next to amplitudes ~1e-5).
        Eigen::VectorXd d = jtj.diagonal();
        const double dmax = d.maxCoeff();
        for (int i = 0; i < d.size(); ++i)
            if (d[i] <= 1e-14 * dmax) d[i] = 1e-14 * std::max(dmax, 1.0);

        const int nf = static_cast<int>(free.size());
        Eigen::MatrixXd a(nf, nf);
        Eigen::VectorXd gf(nf), df(nf);
        for (int i = 0; i < nf; ++i) {
            gf[i] = g[free[i]];
            df[i] = d[free[i]];
            for (int k = 0; k < nf; ++k) a(i, k) = jtj(free[i], free[k]);
        }
        a.diagonal() += mu * df;
        const Eigen::VectorXd step_f = a.ldlt().solve(-gf);

        if (!step_f.allFinite()) {
            mu *= nu;
            nu *= 2.0;
            continue;
        }
        Eigen::VectorXd step = Eigen::VectorXd::Zero(p.size());
        for (int i = 0; i < nf; ++i) step[free[i]] = step_f[i];

        Eigen::VectorXd p_new = p + step;
        clamp_to_bounds(p_new, options);
        const Eigen::VectorXd actual_step = p_new - p;

        const double step_norm = actual_step.norm();
        if (step_norm <= options.xtol * (p.norm() + options.xtol)) {
            converged = true;
            break;
        }

        const Eigen::VectorXd r_new = residuals(p_new);
        const double chi2_new = r_new.squaredNorm();
        const double predicted =
            actual_step.dot(mu * d.cwiseProduct(actual_step) - g);

        if (std::isfinite(chi2_new) && chi2_new < chi2) {
            const double rho = predicted > 0.0 ? (chi2 - chi2_new) / predicted : 1.0;
            const double rel_drop = (chi2 - chi2_new) / std::max(chi2, 1e-300);
            p = p_new;
            r = r_new;
            chi2 = chi2_new;
            j = jac(p);
            jtj = j.transpose() * j;
            g = j.transpose() * r;
            mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
            nu = 2.0;
            if (rel_drop < options.ftol) {
                converged = true;
                break;
            }
        } else {
            mu *= nu;
            nu *= 2.0;
            if (nu > 1e16) {  // no acceptable step at any damping
                out.warnings.push_back("no further progress possible");
                break;
            }
        }
    }

    out.params = p;
    out.residual_norm = chi2;
    out.n_iter = iter;
    out.converged = converged;

    // Covariance from the Jacobian at the optimum, scaled by the reduced
    // chi-square. The rank test runs on the column-normalized Jacobian so
    // parameters of very different magnitude do not masquerade as
    // unidentifiable; a dead or collinear column throws.
    Eigen::VectorXd col_norm(p.size());
    for (int k = 0; k < p.size(); ++k) {
        col_norm[k] = j.col(k).norm();
        if (!(col_norm[k] > 0.0))
            throw RankDeficiencyError(
                "damped_least_squares: residuals are independent of parameter '" +
                names[k] + "'");
    }
    Eigen::MatrixXd j_scaled = j * col_norm.cwiseInverse().asDiagonal();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(j_scaled, Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    if (s[s.size() - 1] <= 1e-10 * s[0])
        throw RankDeficiencyError(
            "damped_least_squares: rank-deficient Jacobian; unidentifiable "
            "directions involve: " +
            null_direction_names(j_scaled, names, 1e-10));

    Eigen::VectorXd s_inv2(s.size());
    for (int i = 0; i < s.size(); ++i) s_inv2[i] = 1.0 / (s[i] * s[i]);
    const Eigen::MatrixXd jtj_inv =
        col_norm.cwiseInverse().asDiagonal() *
        (svd.matrixV() * s_inv2.asDiagonal() * svd.matrixV().transpose()) *
        col_norm.cwiseInverse().asDiagonal();
    const double dof = std::max<double>(1.0, static_cast<double>(r.size() - p.size()));
    const double scale = r.size() > p.size() ? chi2 / dof : chi2;
    out.covariance = jtj_inv * scale;
    if (!converged)
        out.warnings.push_back("maximum iterations reached without convergence");
    return out;
}

FitResult fit_curve(const ModelFn& model, const CurveData& data,
                    const Eigen::VectorXd& init,
                    const std::vector<std::string>& names,
                    const ModelGradFn& grad, const FitOptions& options) {
    if (data.x.size() != data.y.size())
        throw InvalidInput("fit_curve: x/y size mismatch");
    if (!data.sigma.empty() && data.sigma.size() != data.y.size())
        throw InvalidInput("fit_curve: sigma size mismatch");
    if (data.x.size() < static_cast<std::size_t>(init.size()))
        throw InvalidInput("fit_curve: fewer points than parameters");

    const std::size_t n = data.x.size();
    auto weight = [&](std::size_t i) {
        return data.sigma.empty() ? 1.0 : 1.0 / data.sigma[i];
    };
    ResidualFn residuals = [&, n](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(n);
        for (std::size_t i = 0; i < n; ++i)
            r[i] = (model(data.x[i], p) - data.y[i]) * weight(i);
        return r;
    };
    JacobianFn jfn = nullptr;
    if (grad) {
        jfn = [&, n](const Eigen::VectorXd& p) {
            Eigen::MatrixXd j(n, p.size());
            Eigen::VectorXd row(p.size());
            for (std::size_t i = 0; i < n; ++i) {
                grad(data.x[i], p, row);
                j.row(i) = row * weight(i);
            }
            return j;
        };
    }
    return damped_least_squares(residuals, init, names, jfn, options);
}

double golden_section_min(const std::function<double(double)>& f, double a,
                          double b, double tol) {
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - phi * (b - a);
    double x2 = a + phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        }
    }
    return 0.5 * (a + b);
}

namespace {

// Regularized incomplete gamma by series (x < a+1) or continued fraction.
double gamma_p_series(double a, double x) {
    double sum = 1.0 / a, term = sum;
    for (int n = 1; n < 500; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_cf(double a, double x) {
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_q(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw InvalidInput("gamma_q: invalid arguments");
    if (x == 0.0) return 1.0;
    return x < a + 1.0 ? 1.0 - gamma_p_series(a, x) : gamma_q_cf(a, x);
}

double propagate_variance(const Eigen::MatrixXd& cov, const Eigen::VectorXd& grad) {
    return grad.dot(cov * grad);
}

}  // namespace ratefit
