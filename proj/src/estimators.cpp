#include "ratefit/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ratefit/qed.hpp"
#include "ratefit/rng.hpp"
#include "ratefit/units.hpp"

namespace ratefit {

namespace {

double sq(double x) { return x * x; }

// Model/gradient pairs shared between the fitters and the derivative
// verification suite.
namespace shapes {

inline ModelFn phase_roll(double sgn) {
    return [sgn](double w, const Eigen::VectorXd& p) {
        return p[0] + sgn * 2.0 * std::atan((w - p[1]) / p[2]);
    };
}
inline ModelGradFn phase_roll_grad(double sgn) {
    return [sgn](double w, const Eigen::VectorXd& p, Eigen::VectorXd& g) {
        const double d = w - p[1];
        const double den = d * d + p[2] * p[2];
        g[0] = 1.0;
        g[1] = -sgn * 2.0 * p[2] / den;
        g[2] = -sgn * 2.0 * d / den;
    };
}

inline double lorentzian(double d, double amp, double hwhm) {
    return amp * hwhm * hwhm / (d * d + hwhm * hwhm);
}

// p = (amp, center, hwhm) x 3
const ModelFn kTriplet = [](double x, const Eigen::VectorXd& p) {
    return lorentzian(x - p[1], p[0], p[2]) + lorentzian(x - p[4], p[3], p[5]) +
           lorentzian(x - p[7], p[6], p[8]);
};
const ModelGradFn kTripletGrad = [](double x, const Eigen::VectorXd& p,
                                    Eigen::VectorXd& g) {
    for (int k = 0; k < 3; ++k) {
        const double a = p[3 * k], c = p[3 * k + 1], hw = p[3 * k + 2];
        const double d = x - c;
        const double den = d * d + hw * hw;
        g[3 * k] = hw * hw / den;
        g[3 * k + 1] = 2.0 * a * hw * hw * d / (den * den);
        g[3 * k + 2] = 2.0 * a * hw * d * d / (den * den);
    }
};

// p = (gamma_r, g1g2, g1gphi)
const ModelFn kIncohPower = [](double o, const Eigen::VectorXd& p) {
    const double o2 = o * o;
    const double den = p[1] + o2;
    return 0.5 * p[0] * o2 * (p[2] + o2) / (den * den);
};
const ModelGradFn kIncohPowerGrad = [](double o, const Eigen::VectorXd& p,
                                       Eigen::VectorXd& g) {
    const double o2 = o * o;
    const double den = p[1] + o2;
    const double f = 0.5 * p[0] * o2 * (p[2] + o2) / (den * den);
    g[0] = f / p[0];
    g[1] = -2.0 * f / den;
    g[2] = 0.5 * p[0] * o2 / (den * den);
};

// p = (gamma_n, g1g2)
const ModelFn kLossPower = [](double o, const Eigen::VectorXd& p) {
    const double o2 = o * o;
    return 0.5 * p[0] * o2 / (p[1] + o2);
};
const ModelGradFn kLossPowerGrad = [](double o, const Eigen::VectorXd& p,
                                      Eigen::VectorXd& g) {
    const double o2 = o * o;
    const double den = p[1] + o2;
    g[0] = 0.5 * o2 / den;
    g[1] = -0.5 * p[0] * o2 / (den * den);
};

// p = (amplitude, rate)
const ModelFn kDecay = [](double t, const Eigen::VectorXd& p) {
    return p[0] * std::exp(-p[1] * t);
};
const ModelGradFn kDecayGrad = [](double t, const Eigen::VectorXd& p,
                                  Eigen::VectorXd& g) {
    const double e = std::exp(-p[1] * t);
    g[0] = e;
    g[1] = -t * p[0] * e;
};

// p = (rate, amplitude): power-trace parameter order
const ModelFn kPowerDecay = [](double t, const Eigen::VectorXd& p) {
    return p[1] * std::exp(-p[0] * t);
};
const ModelGradFn kPowerDecayGrad = [](double t, const Eigen::VectorXd& p,
                                       Eigen::VectorXd& g) {
    const double e = std::exp(-p[0] * t);
    g[0] = -t * p[1] * e;
    g[1] = e;
};

// p = (phase0, delta_omega), phase decreasing with the detuning sign.
const ModelFn kPhaseLine = [](double t, const Eigen::VectorXd& p) {
    return p[0] - p[1] * t;
};
const ModelGradFn kPhaseLineGrad = [](double t, const Eigen::VectorXd&,
                                      Eigen::VectorXd& g) {
    g[0] = 1.0;
    g[1] = -t;
};

// p = (mean, sigma, amplitude)
const ModelFn kGaussian = [](double x, const Eigen::VectorXd& p) {
    return p[2] * std::exp(-sq(x - p[0]) / (2.0 * sq(p[1])));
};
const ModelGradFn kGaussianGrad = [](double x, const Eigen::VectorXd& p,
                                     Eigen::VectorXd& g) {
    const double z = (x - p[0]) / p[1];
    const double e = std::exp(-0.5 * z * z);
    g[0] = p[2] * e * z / p[1];
    g[1] = p[2] * e * z * z / p[1];
    g[2] = e;
};

// p = (ej_max_hz), x = flux
inline ModelFn flux_arch(double ec_hz) {
    return [ec_hz](double flux, const Eigen::VectorXd& p) {
        const double ej = p[0] * std::abs(std::cos(M_PI * flux));
        return std::sqrt(8.0 * ej * ec_hz) - ec_hz;
    };
}
inline ModelGradFn flux_arch_grad(double ec_hz) {
    return [ec_hz](double flux, const Eigen::VectorXd& p, Eigen::VectorXd& g) {
        const double c = std::abs(std::cos(M_PI * flux));
        g[0] = 0.5 * std::sqrt(8.0 * ec_hz * c / p[0]);
    };
}

}  // namespace shapes

Uncertain derived(const FitResult& fit, const Eigen::VectorXd& grad) {
    return Uncertain{grad.dot(fit.params),
                     std::sqrt(std::max(0.0, propagate_variance(fit.covariance, grad)))};
}

std::vector<double> unwrap_phases(const std::vector<double>& raw) {
    std::vector<double> out(raw.size());
    if (raw.empty()) return out;
    out[0] = raw[0];
    double offset = 0.0;
    for (std::size_t i = 1; i < raw.size(); ++i) {
        double d = raw[i] - raw[i - 1];
        if (d > M_PI) offset -= kTwoPi;
        else if (d < -M_PI) offset += kTwoPi;
        out[i] = raw[i] + offset;
    }
    return out;
}

}  // namespace

std::vector<std::size_t> find_local_maxima(const std::vector<double>& values) {
    std::vector<std::size_t> maxima;
    const std::size_t n = values.size();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        // Plateau-aware: a maximum starts strictly above its left neighbour
        // and ends strictly above its right one; plateaus keep the lowest
        // index (exact ties resolve to lower frequency).
        if (!(values[i] > values[i - 1])) continue;
        std::size_t j = i;
        while (j + 1 < n && values[j + 1] == values[i]) ++j;
        if (j + 1 < n && values[j + 1] < values[i]) maxima.push_back(i);
        i = j;
    }
    // Maxima separated by at most one grid step with only a shallow dip
    // between them are one peak: keep the larger PSD, exact ties keep the
    // lower frequency (the strict > comparison encodes the tie rule).
    std::vector<std::size_t> merged;
    for (std::size_t idx : maxima) {
        bool merge = false;
        if (!merged.empty() && idx - merged.back() <= 2) {
            double valley = values[idx];
            for (std::size_t k = merged.back() + 1; k < idx; ++k)
                valley = std::min(valley, values[k]);
            merge = valley > 0.8 * std::min(values[idx], values[merged.back()]);
        }
        if (merge) {
            if (values[idx] > values[merged.back()]) merged.back() = idx;
        } else {
            merged.push_back(idx);
        }
    }
    return merged;
}

// ---------------------------------------------------------------------------
// Circle fit

namespace {

struct TaubinCircle {
    double cx, cy, r, rms;
};

TaubinCircle taubin_fit(const std::vector<Complex>& pts) {
    const std::size_t n = pts.size();
    double mx = 0.0, my = 0.0;
    for (const Complex& p : pts) {
        mx += p.real();
        my += p.imag();
    }
    mx /= n;
    my /= n;

    double mxx = 0, myy = 0, mxy = 0, mxz = 0, myz = 0, mzz = 0;
    for (const Complex& p : pts) {
        const double u = p.real() - mx, v = p.imag() - my;
        const double z = u * u + v * v;
        mxx += u * u;
        myy += v * v;
        mxy += u * v;
        mxz += u * z;
        myz += v * z;
        mzz += z * z;
    }
    mxx /= n; myy /= n; mxy /= n; mxz /= n; myz /= n; mzz /= n;

    const double mz = mxx + myy;
    const double cov_xy = mxx * myy - mxy * mxy;
    const double var_z = mzz - mz * mz;
    const double a3 = 4.0 * mz;
    const double a2 = -3.0 * mz * mz - mzz;
    const double a1 = var_z * mz + 4.0 * cov_xy * mz - mxz * mxz - myz * myz;
    const double a0 = mxz * (mxz * myy - myz * mxy) +
                      myz * (myz * mxx - mxz * mxy) - var_z * cov_xy;

    double x = 0.0, y = a0;
    for (int iter = 0; iter < 99; ++iter) {
        const double dy = a1 + x * (2.0 * a2 + 3.0 * a3 * x);
        const double x_new = x - y / dy;
        if (!std::isfinite(x_new) || x_new == x) break;
        const double y_new = a0 + x_new * (a1 + x_new * (a2 + x_new * a3));
        if (std::abs(y_new) >= std::abs(y)) break;
        x = x_new;
        y = y_new;
    }

    const double det = x * x - x * mz + cov_xy;
    if (!(std::abs(det) > 1e-12 * std::max(mz * mz, 1e-30)))
        throw DegenerateGeometryError(
            "circle_fit: points carry no usable curvature (no resonance in span)");

    TaubinCircle c;
    const double ux = (mxz * (myy - x) - myz * mxy) / det / 2.0;
    const double uy = (myz * (mxx - x) - mxz * mxy) / det / 2.0;
    c.cx = ux + mx;
    c.cy = uy + my;
    c.r = std::sqrt(ux * ux + uy * uy + mz);

    double ss = 0.0;
    for (const Complex& p : pts)
        ss += sq(std::hypot(p.real() - c.cx, p.imag() - c.cy) - c.r);
    c.rms = std::sqrt(ss / n);
    return c;
}

}  // namespace

CircleFit circle_fit(const std::vector<double>& omega,
                     const std::vector<Complex>& refl, double sigma) {
    if (omega.size() != refl.size())
        throw InvalidInput("circle_fit: grid/sample size mismatch");
    if (omega.size() < 6)
        throw InvalidInput("circle_fit: need at least 6 points");

    const TaubinCircle circle = taubin_fit(refl);

    // Phase of the sample relative to the circle centre rolls by 2 pi across
    // the resonance: psi = psi0 + 2 atan((omega - omega01) / gamma_2).
    const std::size_t n = omega.size();
    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i)
        raw[i] = std::atan2(refl[i].imag() - circle.cy, refl[i].real() - circle.cx);
    const std::vector<double> psi = unwrap_phases(raw);

    // Initial guesses: the resonance is where the unwrapped phase crosses the
    // midpoint; the slope there is 2 / gamma_2.
    const double psi_mid = 0.5 * (psi.front() + psi.back());
    std::size_t i_mid = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if ((psi[i] - psi_mid) * (psi[i + 1] - psi_mid) <= 0.0) {
            i_mid = i;
            break;
        }
    }
    const double w0_init = omega[i_mid];
    const std::size_t lo = i_mid > 3 ? i_mid - 3 : 0;
    const std::size_t hi = std::min(n - 1, i_mid + 3);
    double slope = (psi[hi] - psi[lo]) / (omega[hi] - omega[lo]);
    if (!(slope != 0.0) || !std::isfinite(slope))
        slope = (psi.back() - psi.front()) / (omega.back() - omega.front());
    const double g2_init = std::abs(2.0 / slope);

    CurveData data;
    data.x.assign(omega.begin(), omega.end());
    data.y = psi;
    if (sigma > 0.0) {
        // All samples sit on the circle, so the phase noise is sigma/radius
        // uniformly; per-point distances would make the weights themselves
        // noisy and bias the covariance.
        data.sigma.assign(n, sigma / std::max(circle.r, 1e-12));
    }

    const double sgn = slope >= 0.0 ? 1.0 : -1.0;
    ModelFn model = shapes::phase_roll(sgn);
    ModelGradFn grad = shapes::phase_roll_grad(sgn);

    Eigen::VectorXd init(3);
    init << psi_mid, w0_init, g2_init;
    FitOptions opt;
    opt.lower = Eigen::VectorXd(3);
    opt.lower << -4.0 * M_PI, omega.front(), 1e-6 * g2_init;
    opt.upper = Eigen::VectorXd(3);
    opt.upper << 4.0 * M_PI, omega.back(), 1e6 * g2_init;
    FitResult phase = fit_curve(model, data, init, {"phase0", "omega01", "gamma_2"},
                                grad, opt);

    // Final joint fit in the complex plane. The algebraic circle and the
    // phase roll seed it; refitting centre, radius and resonance together
    // is what makes the covariance honest (the centre error is strongly
    // correlated with the phase-roll parameters).
    const std::size_t nn = n;
    const double wscale = sigma > 0.0 ? 1.0 / sigma : 1.0;
    ResidualFn joint = [&, nn, wscale, sgn](const Eigen::VectorXd& p) {
        // p = psi0, omega01, gamma_2, cx, cy, radius
        Eigen::VectorXd r(2 * nn);
        for (std::size_t i = 0; i < nn; ++i) {
            const double psi_i = p[0] + sgn * 2.0 * std::atan((omega[i] - p[1]) / p[2]);
            const Complex m = Complex{p[3], p[4]} + p[5] * std::polar(1.0, psi_i);
            r[2 * i] = (m.real() - refl[i].real()) * wscale;
            r[2 * i + 1] = (m.imag() - refl[i].imag()) * wscale;
        }
        return r;
    };
    Eigen::VectorXd jinit(6);
    jinit << phase.value("phase0"), phase.value("omega01"), phase.value("gamma_2"),
        circle.cx, circle.cy, circle.r;
    FitOptions jopt;
    jopt.lower = Eigen::VectorXd(6);
    jopt.lower << -4.0 * M_PI, omega.front(), 1e-6 * g2_init, -10.0, -10.0, 1e-6;
    jopt.upper = Eigen::VectorXd(6);
    jopt.upper << 4.0 * M_PI, omega.back(), 1e6 * g2_init, 10.0, 10.0, 10.0;
    const FitResult refined = damped_least_squares(
        joint, jinit, {"phase0", "omega01", "gamma_2", "cx", "cy", "radius"},
        nullptr, jopt);

    const double gamma_2 = refined.value("gamma_2");
    const double radius = refined.value("radius");
    const double gamma_r = 2.0 * radius * gamma_2;

    CircleFit out;
    out.center_re = refined.value("cx");
    out.center_im = refined.value("cy");
    out.radius = radius;
    out.algebraic_rms = circle.rms;

    // Map (omega01, gamma_2, gamma_r, phase0) out of the joint covariance.
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(4, 6);
    jac(0, 1) = 1.0;                 // omega01
    jac(1, 2) = 1.0;                 // gamma_2
    jac(2, 2) = 2.0 * radius;        // gamma_r / d gamma_2
    jac(2, 5) = 2.0 * gamma_2;       // gamma_r / d radius
    jac(3, 0) = 1.0;                 // phase0

    FitResult& fit = out.fit;
    fit.names = {"omega01", "gamma_2", "gamma_r", "phase0"};
    fit.params = Eigen::VectorXd(4);
    fit.params << refined.value("omega01"), gamma_2, gamma_r, refined.value("phase0");
    fit.covariance = jac * refined.covariance * jac.transpose();
    fit.residual_norm = refined.residual_norm;
    fit.n_iter = phase.n_iter + refined.n_iter;
    fit.converged = phase.converged && refined.converged;
    fit.n_points = n;
    fit.warnings = refined.warnings;
    return out;
}

// ---------------------------------------------------------------------------
// Triplet fit

namespace {

using shapes::lorentzian;

/// Half width at half maximum of the peak at index i, from linear
/// interpolation of the half-max crossings.
double estimate_hwhm(const std::vector<double>& x, const std::vector<double>& y,
                     std::size_t i) {
    const double half = 0.5 * y[i];
    double left = x[i] - (x[1] - x[0]);
    for (std::size_t k = i; k-- > 0;) {
        if (y[k] <= half) {
            const double f = (y[k + 1] - half) / (y[k + 1] - y[k]);
            left = x[k + 1] + f * (x[k] - x[k + 1]);
            break;
        }
    }
    double right = x[i] + (x[1] - x[0]);
    for (std::size_t k = i + 1; k < x.size(); ++k) {
        if (y[k] <= half) {
            const double f = (y[k - 1] - half) / (y[k - 1] - y[k]);
            right = x[k - 1] + f * (x[k] - x[k - 1]);
            break;
        }
    }
    return 0.5 * (right - left);
}

}  // namespace

TripletFit fit_mollow_triplet(const Spectrum& spectrum,
                              const TripletOptions& options) {
    spectrum.validate();
    const std::vector<double>& w = spectrum.omega_grid;
    const std::vector<double>& y = spectrum.psd;
    if (w.size() < 12) throw InvalidInput("fit_mollow_triplet: too few points");

    const std::vector<std::size_t> maxima = find_local_maxima(y);
    if (maxima.size() < 3)
        throw ValidityError(
            "fit_mollow_triplet: fewer than three peaks found; use the full "
            "line-shape fit");

    const std::size_t ic = *std::max_element(
        maxima.begin(), maxima.end(),
        [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
    const double hwhm_c = estimate_hwhm(w, y, ic);
    const double min_sep = options.min_separation_linewidths * hwhm_c;

    std::size_t ir = ic, ib = ic;
    for (std::size_t m : maxima) {
        if (w[m] < w[ic] - min_sep && (ir == ic || y[m] > y[ir])) ir = m;
        if (w[m] > w[ic] + min_sep && (ib == ic || y[m] > y[ib])) ib = m;
    }
    if (ir == ic || ib == ic)
        throw ValidityError(
            "fit_mollow_triplet: sidebands unresolved from the central peak; "
            "use the full line-shape fit");

    CurveData data;
    data.x = w;
    data.y = y;
    if (spectrum.has_sigma()) data.sigma = spectrum.sigma;

    TripletFit out;
    const std::vector<std::string> names = {"amp_red",  "center_red",  "hwhm_red",
                                            "amp_c",    "center_c",    "hwhm_c",
                                            "amp_blue", "center_blue", "hwhm_blue"};
    if (!options.joint) {
        const ModelFn& model = shapes::kTriplet;
        const ModelGradFn& grad = shapes::kTripletGrad;
        Eigen::VectorXd init(9);
        init << y[ir], w[ir], estimate_hwhm(w, y, ir),
                y[ic], w[ic], hwhm_c,
                y[ib], w[ib], estimate_hwhm(w, y, ib);
        FitOptions opt;
        opt.lower = Eigen::VectorXd(9);
        opt.upper = Eigen::VectorXd(9);
        const double step = w[1] - w[0];
        for (int k = 0; k < 3; ++k) {
            opt.lower[3 * k] = 0.0;
            opt.upper[3 * k] = 10.0 * *std::max_element(y.begin(), y.end());
            opt.lower[3 * k + 1] = w.front();
            opt.upper[3 * k + 1] = w.back();
            opt.lower[3 * k + 2] = 0.1 * step;
            opt.upper[3 * k + 2] = w.back() - w.front();
        }
        out.fit = fit_curve(model, data, init, names, grad, opt);
    } else {
        // Tied model: scale, center, rabi, gamma_1, gamma_2.
        ModelFn model = [](double x, const Eigen::VectorXd& p) {
            const double d = x - p[1];
            const double gs = 0.5 * (p[3] + p[4]);
            return p[0] * (lorentzian(d + p[2], 1.0, gs) / gs +
                           2.0 * lorentzian(d, 1.0, p[4]) / p[4] +
                           lorentzian(d - p[2], 1.0, gs) / gs);
        };
        Eigen::VectorXd init(5);
        const double g2_init = hwhm_c;
        const double gs_init = estimate_hwhm(w, y, ib);
        init << y[ic] * hwhm_c / 2.0, w[ic], 0.5 * (w[ib] - w[ir]),
                std::max(2.0 * gs_init - g2_init, 0.5 * g2_init), g2_init;
        FitResult joint = fit_curve(model, data, init,
                                    {"scale", "center", "rabi", "gamma_1", "gamma_2"},
                                    nullptr, {});
        // Re-express as per-peak parameters for a uniform downstream shape.
        const double a = joint.value("scale");
        const double g1 = joint.value("gamma_1");
        const double g2 = joint.value("gamma_2");
        const double gs = 0.5 * (g1 + g2);
        const double rabi = joint.value("rabi");
        const double c = joint.value("center");
        FitResult& f = out.fit;
        f.names = names;
        f.params = Eigen::VectorXd(9);
        f.params << a / gs, c - rabi, gs, 2.0 * a / g2, c, g2, a / gs, c + rabi, gs;
        // Covariance transported by the chain rule, J: 9 x 5.
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(9, 5);
        jac(0, 0) = 1.0 / gs;      jac(0, 3) = -0.5 * a / (gs * gs);
        jac(0, 4) = -0.5 * a / (gs * gs);
        jac(1, 1) = 1.0;           jac(1, 2) = -1.0;
        jac(2, 3) = 0.5;           jac(2, 4) = 0.5;
        jac(3, 0) = 2.0 / g2;      jac(3, 4) = -2.0 * a / (g2 * g2);
        jac(4, 1) = 1.0;
        jac(5, 4) = 1.0;
        jac(6, 0) = 1.0 / gs;      jac(6, 3) = -0.5 * a / (gs * gs);
        jac(6, 4) = -0.5 * a / (gs * gs);
        jac(7, 1) = 1.0;           jac(7, 2) = 1.0;
        jac(8, 3) = 0.5;           jac(8, 4) = 0.5;
        f.covariance = jac * joint.covariance * jac.transpose();
        f.residual_norm = joint.residual_norm;
        f.n_iter = joint.n_iter;
        f.converged = joint.converged;
        f.n_points = joint.n_points;
        f.warnings = joint.warnings;
    }

    // Derived quantities with full covariance propagation.
    Eigen::VectorXd g = Eigen::VectorXd::Zero(9);
    g[5] = 1.0;
    out.gamma_2 = derived(out.fit, g);
    g.setZero(); g[2] = 1.0;
    out.gamma_s_red = derived(out.fit, g);
    g.setZero(); g[8] = 1.0;
    out.gamma_s_blue = derived(out.fit, g);
    g.setZero(); g[2] = 1.0; g[8] = 1.0; g[5] = -1.0;
    out.gamma_1 = derived(out.fit, g);
    g.setZero(); g[7] = 0.5; g[1] = -0.5;
    out.rabi = derived(out.fit, g);

    const auto area = [&](int base) {
        const double a = out.fit.params[base], hw = out.fit.params[base + 2];
        Eigen::VectorXd ga = Eigen::VectorXd::Zero(9);
        ga[base] = M_PI * hw;
        ga[base + 2] = M_PI * a;
        return Uncertain{M_PI * a * hw,
                         std::sqrt(std::max(0.0, propagate_variance(out.fit.covariance, ga)))};
    };
    out.area_red = area(0);
    out.area_center = area(3);
    out.area_blue = area(6);
    return out;
}

// ---------------------------------------------------------------------------
// Full line-shape fit

namespace {

struct SpectrumModelInit {
    double gamma_1, gamma_phi, rabi, delta;
};

SpectrumModelInit seed_spectrum_init(const Spectrum& spectrum, double omega_q,
                                     const SpectrumFitOptions& options,
                                     double gamma_r) {
    SpectrumModelInit init{};
    const std::vector<double>& w = spectrum.omega_grid;
    const std::vector<double>& y = spectrum.psd;

    // When the drive settings are supplied, Gamma_1 ~ 1.2 Gamma_r is a good
    // enough seed; the peak scan is only for fully blind data.
    const bool need_scan = !options.init_rabi || !options.init_delta;
    double delta = 0.0, rabi = 0.0, g1 = gamma_r * 1.2;
    if (need_scan) {
        // Tallest peak, then the tallest local maxima well outside its width
        // on each side; top-by-value alone would pick noise spikes riding on
        // the dominant peak.
        const std::vector<std::size_t> maxima = find_local_maxima(y);
        std::size_t ic = maxima.empty() ? 0 : maxima.front();
        for (std::size_t m : maxima)
            if (y[m] > y[ic]) ic = m;
        bool found = !maxima.empty();
        if (found) {
            const double hw = std::max(estimate_hwhm(w, y, ic),
                                       2.0 * (w[1] - w[0]));
            std::size_t ir = ic, ib = ic;
            for (std::size_t m : maxima) {
                if (w[m] < w[ic] - 4.0 * hw && (ir == ic || y[m] > y[ir])) ir = m;
                if (w[m] > w[ic] + 4.0 * hw && (ib == ic || y[m] > y[ib])) ib = m;
            }
            if (ir != ic && ib != ic) {
                std::vector<double> centers = {w[ir] - omega_q, w[ic] - omega_q,
                                               w[ib] - omega_q};
                std::sort(centers.begin(), centers.end());
                delta = centers[1];
                const double r_est = 0.5 * (centers[2] - centers[0]);
                rabi = r_est > std::abs(delta)
                           ? std::sqrt(r_est * r_est - delta * delta)
                           : 0.5 * r_est;
                g1 = std::max(hw, 0.1 * gamma_r);
            } else {
                found = false;
            }
        }
        if (!found && (!options.init_rabi || !options.init_delta))
            throw InvalidInput(
                "fit_full_spectrum: peaks unresolved, supply initial guesses");
    }
    init.gamma_1 = options.init_gamma_1.value_or(g1);
    init.gamma_phi = options.init_gamma_phi.value_or(0.02 * init.gamma_1);
    init.rabi = options.init_rabi.value_or(rabi);
    init.delta = options.init_delta.value_or(delta);
    return init;
}

double spectrum_model_eval(double d01, const double* p, double gamma_r,
                           bool with_amp) {
    // p = gamma_1, gamma_phi, rabi, delta [, amp]
    RateSet r;
    r.gamma_r = gamma_r;
    r.gamma_n = p[0] - gamma_r;  // may be transiently negative inside LM
    r.gamma_phi = p[1];
    const double v = incoherent_psd_at(d01, p[3], p[2], r);
    return with_amp ? p[4] * v : v;
}

SpectrumFit finish_spectrum_fit(FitResult fit, Uncertain gamma_r_ref) {
    SpectrumFit out;
    const int n = static_cast<int>(fit.params.size());
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    g[0] = 1.0;
    out.gamma_1 = derived(fit, g);
    g.setZero(); g[1] = 1.0;
    out.gamma_phi = derived(fit, g);
    g.setZero(); g[0] = 0.5; g[1] = 1.0;
    out.gamma_2 = derived(fit, g);
    out.gamma_n = Uncertain{out.gamma_1.value - gamma_r_ref.value,
                            std::hypot(out.gamma_1.sigma, gamma_r_ref.sigma)};
    out.fit = std::move(fit);
    return out;
}

}  // namespace

SpectrumFit fit_full_spectrum(const Spectrum& spectrum, double omega_q,
                              Uncertain gamma_r_ref,
                              const SpectrumFitOptions& options) {
    spectrum.validate();
    const SpectrumModelInit seed =
        seed_spectrum_init(spectrum, omega_q, options, gamma_r_ref.value);

    const bool amp = options.free_amplitude;
    const int np = amp ? 5 : 4;
    const double gr = gamma_r_ref.value;

    CurveData data;
    data.x.resize(spectrum.size());
    for (std::size_t i = 0; i < spectrum.size(); ++i)
        data.x[i] = spectrum.omega_grid[i] - omega_q;
    data.y = spectrum.psd;
    if (spectrum.has_sigma()) data.sigma = spectrum.sigma;

    ModelFn model = [gr, amp](double x, const Eigen::VectorXd& p) {
        return spectrum_model_eval(x, p.data(), gr, amp);
    };

    Eigen::VectorXd init(np);
    init[0] = seed.gamma_1;
    init[1] = seed.gamma_phi;
    init[2] = seed.rabi;
    init[3] = seed.delta;
    if (amp) init[4] = 1.0;

    std::vector<std::string> names = {"gamma_1", "gamma_phi", "rabi", "delta"};
    if (amp) names.push_back("amplitude");

    FitOptions opt;
    opt.max_iter = options.max_iter;
    opt.lower = Eigen::VectorXd::Constant(np, -1e30);
    opt.upper = Eigen::VectorXd::Constant(np, 1e30);
    // Gamma_1 = Gamma_r + Gamma_n >= Gamma_r; half of it as slack for noise.
    opt.lower[0] = 0.5 * gr;
    opt.lower[1] = 0.0;
    opt.lower[2] = 1e-3 * seed.rabi;
    if (amp) opt.lower[4] = 1e-6;

    return finish_spectrum_fit(
        fit_curve(model, data, init, names, nullptr, opt), gamma_r_ref);
}

SpectrumFit fit_full_spectrum_pair(const Spectrum& a, const Spectrum& b,
                                   double omega_q, Uncertain gamma_r_ref,
                                   const SpectrumFitOptions& options) {
    a.validate();
    b.validate();
    const SpectrumModelInit sa = seed_spectrum_init(a, omega_q, options, gamma_r_ref.value);
    SpectrumFitOptions opt_b;  // per-trace drive settings come from b's own scan
    opt_b.init_gamma_1 = sa.gamma_1;
    opt_b.init_gamma_phi = sa.gamma_phi;
    const SpectrumModelInit sb = seed_spectrum_init(b, omega_q, opt_b, gamma_r_ref.value);

    const double gr = gamma_r_ref.value;
    const std::size_t na = a.size(), nb = b.size();

    // Shared (gamma_1, gamma_phi); per-trace (rabi, delta, amplitude).
    ResidualFn residuals = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(na + nb);
        double q[5];
        q[0] = p[0]; q[1] = p[1];
        q[2] = p[2]; q[3] = p[3]; q[4] = p[4];
        for (std::size_t i = 0; i < na; ++i) {
            const double m = spectrum_model_eval(a.omega_grid[i] - omega_q, q, gr, true);
            const double s = a.has_sigma() ? a.sigma[i] : 1.0;
            r[i] = (m - a.psd[i]) / s;
        }
        q[2] = p[5]; q[3] = p[6]; q[4] = p[7];
        for (std::size_t i = 0; i < nb; ++i) {
            const double m = spectrum_model_eval(b.omega_grid[i] - omega_q, q, gr, true);
            const double s = b.has_sigma() ? b.sigma[i] : 1.0;
            r[na + i] = (m - b.psd[i]) / s;
        }
        return r;
    };

    Eigen::VectorXd init(8);
    init << sa.gamma_1, 0.5 * (sa.gamma_phi + sb.gamma_phi),
            sa.rabi, sa.delta, 1.0, sb.rabi, sb.delta, 1.0;
    FitOptions opt;
    opt.lower = Eigen::VectorXd::Constant(8, -1e30);
    opt.upper = Eigen::VectorXd::Constant(8, 1e30);
    opt.lower[0] = 0.5 * gr;
    opt.lower[1] = 0.0;
    opt.lower[2] = 1e-3 * sa.rabi;
    opt.lower[5] = 1e-3 * sb.rabi;
    opt.lower[4] = opt.lower[7] = 1e-6;

    FitResult fit = damped_least_squares(
        residuals, init,
        {"gamma_1", "gamma_phi", "rabi_a", "delta_a", "amp_a", "rabi_b",
         "delta_b", "amp_b"},
        nullptr, opt);
    return finish_spectrum_fit(std::move(fit), gamma_r_ref);
}

// ---------------------------------------------------------------------------
// Power scattering

ScatteringFit fit_scattering_powers(const PowerCurves& curves) {
    const std::size_t n = curves.rabi.size();
    if (curves.p_coh.size() != n || curves.p_incoh.size() != n ||
        curves.p_loss.size() != n)
        throw InvalidInput("fit_scattering_powers: curve size mismatch");
    if (n < 6) throw InvalidInput("fit_scattering_powers: too few points");

    const double o_max = *std::max_element(curves.rabi.begin(), curves.rabi.end());
    const double p_incoh_sat =
        *std::max_element(curves.p_incoh.begin(), curves.p_incoh.end());
    const double p_loss_sat =
        *std::max_element(curves.p_loss.begin(), curves.p_loss.end());

    ScatteringFit out;

    {  // P_incoh = (gr/2) O^2 (c + O^2) / (b + O^2)^2, params gr, b, c
        CurveData d;
        d.x = curves.rabi;
        d.y = curves.p_incoh;
        d.sigma = curves.sigma_incoh;
        const ModelFn& model = shapes::kIncohPower;
        const ModelGradFn& grad = shapes::kIncohPowerGrad;
        Eigen::VectorXd init(3);
        init << 2.0 * p_incoh_sat, sq(0.15 * o_max), sq(0.02 * o_max);
        FitOptions opt;
        opt.lower = Eigen::VectorXd(3);
        opt.lower << 0.0, 0.0, 0.0;
        opt.upper = Eigen::VectorXd::Constant(3, 1e30);
        out.incoh = fit_curve(model, d, init, {"gamma_r", "g1g2", "g1gphi"},
                              grad, opt);
    }
    {  // P_loss = gn O^2 / (2 (b + O^2)), params gn, b
        CurveData d;
        d.x = curves.rabi;
        d.y = curves.p_loss;
        d.sigma = curves.sigma_loss;
        const ModelFn& model = shapes::kLossPower;
        const ModelGradFn& grad = shapes::kLossPowerGrad;
        Eigen::VectorXd init(2);
        init << 2.0 * p_loss_sat, sq(0.15 * o_max);
        FitOptions opt;
        opt.lower = Eigen::VectorXd(2);
        opt.lower << 0.0, 0.0;
        opt.upper = Eigen::VectorXd::Constant(2, 1e30);
        out.loss = fit_curve(model, d, init, {"gamma_n", "g1g2"}, grad, opt);
    }
    {  // P_coh in the elementary rates gr, gn, gphi
        CurveData d;
        d.x = curves.rabi;
        d.y = curves.p_coh;
        d.sigma = curves.sigma_coh;
        ModelFn model = [](double o, const Eigen::VectorXd& p) {
            const double g1 = p[0] + p[1];
            const double g2 = 0.5 * g1 + p[2];
            const double o2 = o * o;
            const double refl = 1.0 - g1 * p[0] / (g1 * g2 + o2);
            return o2 / (4.0 * p[0]) * refl * refl;
        };
        Eigen::VectorXd init(3);
        init << 2.0 * p_incoh_sat, 2.0 * p_loss_sat, 0.01 * p_incoh_sat;
        FitOptions opt;
        opt.lower = Eigen::VectorXd(3);
        opt.lower << 1e-6 * p_incoh_sat, 0.0, 0.0;
        opt.upper = Eigen::VectorXd::Constant(3, 1e30);
        out.coh = fit_curve(model, d, init, {"gamma_r", "gamma_n", "gamma_phi"},
                            nullptr, opt);
    }

    // Assemble the combined rate set: gamma_r from the incoherent curve,
    // gamma_n from the loss curve, gamma_phi from the g1gphi product.
    Uncertain gr = out.incoh.get("gamma_r");
    Uncertain gn = out.loss.get("gamma_n");
    if (curves.calib_sigma_rel > 0.0) {
        gr.sigma = std::hypot(gr.sigma, curves.calib_sigma_rel * gr.value);
        gn.sigma = std::hypot(gn.sigma, curves.calib_sigma_rel * gn.value);
    }
    const double g1 = gr.value + gn.value;
    const double g1_sigma = std::hypot(gr.sigma, gn.sigma);
    const Uncertain prod = out.incoh.get("g1gphi");
    const double gphi = prod.value / g1;
    const double gphi_sigma = std::hypot(prod.sigma / g1,
                                         prod.value * g1_sigma / (g1 * g1));
    out.combined.gamma_r = gr.value;
    out.combined.gamma_r_sigma = gr.sigma;
    out.combined.gamma_n = gn.value;
    out.combined.gamma_n_sigma = gn.sigma;
    out.combined.gamma_phi = std::max(0.0, gphi);
    out.combined.gamma_phi_sigma = gphi_sigma;

    // Cross-consistency of the shared g1g2 product between the two curves.
    const Uncertain b1 = out.incoh.get("g1g2");
    const Uncertain b2 = out.loss.get("g1g2");
    const double tol = 5.0 * std::hypot(b1.sigma, b2.sigma);
    if (tol > 1e-9 * std::abs(b1.value) && std::abs(b1.value - b2.value) > tol) {
        std::ostringstream msg;
        msg << "g1g2 product inconsistent between incoherent and loss fits "
               "beyond 5 sigma ("
            << b1.value << " vs " << b2.value << ")";
        out.warnings.push_back(msg.str());
    }
    const Uncertain gr_coh = out.coh.get("gamma_r");
    const double tol_r = 5.0 * std::hypot(gr.sigma, gr_coh.sigma);
    if (tol_r > 1e-9 * gr.value && std::abs(gr.value - gr_coh.value) > tol_r)
        out.warnings.push_back(
            "gamma_r inconsistent between incoherent and coherent fits beyond 5 sigma");
    return out;
}

// ---------------------------------------------------------------------------
// Single-point rates

SinglePointRates single_point_rates(Uncertain p_loss, Uncertain p_incoh,
                                    double omega,
                                    std::optional<Uncertain> gamma_r_ref) {
    if (!(omega > 0.0)) throw InvalidInput("single_point_rates: omega must be > 0");
    if (!(p_loss.value > 0.0) || !(p_incoh.value > 0.0))
        throw InvalidInput("single_point_rates: powers must be > 0");

    // Fixed point of the saturation correction k = Gamma_1 Gamma_2 / Omega^2
    // (Gamma_phi taken as 0 inside the correction, so Gamma_2 = Gamma_1 / 2).
    double gn = 2.0 * p_loss.value;
    double gr = gamma_r_ref ? gamma_r_ref->value : 2.0 * p_incoh.value;
    double k = 0.0;
    int iter = 0;
    for (; iter < 200; ++iter) {
        const double g1 = gr + gn;
        const double k_new = 0.5 * g1 * g1 / (omega * omega);
        if (k_new > 0.3)
            throw SaturationError(
                "single_point_rates: saturation correction exceeds 30%, drive "
                "is not in the saturated regime");
        const double gn_new = 2.0 * p_loss.value * (1.0 + k_new);
        const double gr_new = gamma_r_ref
                                  ? gamma_r_ref->value
                                  : 2.0 * p_incoh.value * sq(1.0 + k_new);
        const bool done = std::abs(gn_new - gn) <= 1e-14 * gn &&
                          std::abs(gr_new - gr) <= 1e-14 * std::max(gr, 1e-300);
        gn = gn_new;
        gr = gr_new;
        k = k_new;
        if (done) break;
    }

    SinglePointRates out;
    out.correction = k;
    out.iterations = iter + 1;
    out.gamma_n = Uncertain{gn, 2.0 * p_loss.sigma * (1.0 + k)};
    out.gamma_r = gamma_r_ref
                      ? *gamma_r_ref
                      : Uncertain{gr, 2.0 * p_incoh.sigma * sq(1.0 + k)};
    out.gamma_1 = Uncertain{gr + gn, std::hypot(out.gamma_r.sigma, out.gamma_n.sigma)};
    return out;
}

// ---------------------------------------------------------------------------
// Time-domain fits

FitResult fit_complex_decay(const ComplexTrace& trace) {
    trace.validate();
    if (trace.size() < 4) throw InvalidInput("fit_complex_decay: too few samples");
    const std::size_t n = trace.size();

    // Keep samples with usable SNR; below ~3 sigma on the magnitude the phase
    // is dominated by noise.
    std::size_t n_use = n;
    if (trace.has_sigma()) {
        for (std::size_t i = 0; i < n; ++i) {
            if (std::abs(trace.values[i]) < 3.0 * trace.sigma[i]) {
                n_use = i;
                break;
            }
        }
    }
    if (n_use < 4) n_use = std::min<std::size_t>(4, n);

    CurveData mag;
    mag.x.assign(trace.t_grid.begin(), trace.t_grid.begin() + n_use);
    mag.y.resize(n_use);
    for (std::size_t i = 0; i < n_use; ++i) mag.y[i] = std::abs(trace.values[i]);
    if (trace.has_sigma())
        mag.sigma.assign(trace.sigma.begin(), trace.sigma.begin() + n_use);

    // Log-linear seed over the usable range.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < n_use; ++i) {
        if (mag.y[i] <= 0.0) continue;
        const double ly = std::log(mag.y[i]);
        sx += mag.x[i];
        sy += ly;
        sxx += mag.x[i] * mag.x[i];
        sxy += mag.x[i] * ly;
        ++m;
    }
    if (m < 2) throw InvalidInput("fit_complex_decay: trace has no positive magnitude");
    const double det = m * sxx - sx * sx;
    const double slope = (m * sxy - sx * sy) / det;
    const double icept = (sy * sxx - sx * sxy) / det;
    const double g2_init = std::max(-slope, 1e-6 / (mag.x.back() - mag.x.front()));

    Eigen::VectorXd init(2);
    init << std::exp(icept), g2_init;
    FitOptions mag_opt;
    mag_opt.lower = Eigen::VectorXd(2);
    mag_opt.lower << 0.0, 0.0;
    mag_opt.upper = Eigen::VectorXd::Constant(2, 1e30);
    FitResult mag_fit;
    if (trace.has_sigma()) {
        // The magnitude of a noisy complex sample rides on the noise floor:
        // E|v| ~ sqrt(|v_clean|^2 + 2 sigma^2). Fitting the bare exponential
        // would bias gamma_2 low wherever the tail approaches the floor.
        ResidualFn rician = [&mag](const Eigen::VectorXd& p) {
            const std::size_t m = mag.x.size();
            Eigen::VectorXd res(m);
            for (std::size_t i = 0; i < m; ++i) {
                const double clean = p[0] * std::exp(-p[1] * mag.x[i]);
                const double model =
                    std::sqrt(clean * clean + 2.0 * mag.sigma[i] * mag.sigma[i]);
                res[i] = (model - mag.y[i]) / mag.sigma[i];
            }
            return res;
        };
        mag_fit = damped_least_squares(rician, init, {"amplitude", "gamma_2"},
                                       nullptr, mag_opt);
    } else {
        mag_fit = fit_curve(shapes::kDecay, mag, init, {"amplitude", "gamma_2"},
                            shapes::kDecayGrad, mag_opt);
    }

    // Phase stage: unwrapped arg fitted to phase0 - delta_omega * tau
    // (emission evolves as exp(-i delta omega tau)).
    CurveData ph;
    ph.x = mag.x;
    std::vector<double> raw(n_use);
    for (std::size_t i = 0; i < n_use; ++i)
        raw[i] = std::arg(trace.values[i]);
    ph.y = unwrap_phases(raw);
    if (trace.has_sigma()) {
        ph.sigma.resize(n_use);
        for (std::size_t i = 0; i < n_use; ++i)
            ph.sigma[i] = trace.sigma[i] / std::max(std::abs(trace.values[i]), 1e-300);
    }
    const ModelFn& line = shapes::kPhaseLine;
    const ModelGradFn& line_grad = shapes::kPhaseLineGrad;
    Eigen::VectorXd ph_init(2);
    const double dt = ph.x[1] - ph.x[0];
    ph_init << ph.y.front(), -(ph.y.back() - ph.y.front()) / (ph.x.back() - ph.x.front());
    const FitResult ph_fit =
        fit_curve(line, ph, ph_init, {"phase0", "delta_omega"}, line_grad, {});

    const double delta_omega = ph_fit.value("delta_omega");
    // A slope at the Nyquist boundary cannot be told apart from its alias.
    if (std::abs(delta_omega) * dt >= 0.95 * M_PI)
        throw AliasingError(
            "fit_complex_decay: |delta_omega| * dt at the sampling Nyquist "
            "limit, phase slope is ambiguous at this sample spacing");

    FitResult out;
    out.names = {"gamma_2", "delta_omega", "amplitude", "phase0"};
    out.params = Eigen::VectorXd(4);
    out.params << mag_fit.value("gamma_2"), delta_omega, mag_fit.value("amplitude"),
        ph_fit.value("phase0");
    out.covariance = Eigen::MatrixXd::Zero(4, 4);
    out.covariance(0, 0) = mag_fit.covariance(1, 1);
    out.covariance(2, 2) = mag_fit.covariance(0, 0);
    out.covariance(0, 2) = out.covariance(2, 0) = mag_fit.covariance(0, 1);
    out.covariance(1, 1) = ph_fit.covariance(1, 1);
    out.covariance(3, 3) = ph_fit.covariance(0, 0);
    out.covariance(1, 3) = out.covariance(3, 1) = ph_fit.covariance(0, 1);
    out.residual_norm = mag_fit.residual_norm + ph_fit.residual_norm;
    out.n_iter = std::max(mag_fit.n_iter, ph_fit.n_iter);
    out.converged = mag_fit.converged && ph_fit.converged;
    out.n_points = n_use;
    out.warnings = mag_fit.warnings;
    out.warnings.insert(out.warnings.end(), ph_fit.warnings.begin(),
                        ph_fit.warnings.end());
    const double g2 = out.params[0];
    if (g2 > 0.0 && trace.t_grid[n_use - 1] - trace.t_grid[0] < 2.0 / g2)
        out.warnings.push_back("trace covers less than 2 / gamma_2");
    return out;
}

FitResult fit_exponential_power(const ComplexTrace& trace) {
    trace.validate();
    if (trace.role != TraceRole::Power)
        throw InvalidInput("fit_exponential_power: expected a power trace");
    if (trace.size() < 3) throw InvalidInput("fit_exponential_power: too few samples");

    const std::size_t n = trace.size();
    CurveData d;
    d.x = trace.t_grid;
    d.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.y[i] = trace.values[i].real();
    if (trace.has_sigma()) d.sigma = trace.sigma;

    bool negative_beyond_noise = false;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = trace.has_sigma() ? trace.sigma[i] : 0.0;
        if (d.y[i] < -5.0 * s && (s > 0.0 || d.y[i] < 0.0))
            negative_beyond_noise = true;
    }

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t m = 0;
    const double y_max = *std::max_element(d.y.begin(), d.y.end());
    for (std::size_t i = 0; i < n; ++i) {
        if (d.y[i] <= 0.01 * y_max) continue;
        const double ly = std::log(d.y[i]);
        sx += d.x[i];
        sy += ly;
        sxx += d.x[i] * d.x[i];
        sxy += d.x[i] * ly;
        ++m;
    }
    if (m < 2) throw InvalidInput("fit_exponential_power: no positive samples");
    const double det = m * sxx - sx * sx;
    const double slope = (m * sxy - sx * sy) / det;
    const double icept = (sy * sxx - sx * sxy) / det;

    const ModelFn& model = shapes::kPowerDecay;
    const ModelGradFn& grad = shapes::kPowerDecayGrad;
    Eigen::VectorXd init(2);
    init << std::max(-slope, 1e-6 / (d.x.back() - d.x.front())), std::exp(icept);
    FitOptions opt;
    opt.lower = Eigen::VectorXd(2);
    opt.lower << 0.0, 0.0;
    opt.upper = Eigen::VectorXd::Constant(2, 1e30);
    FitResult out = fit_curve(model, d, init, {"gamma_1", "p0"}, grad, opt);
    if (negative_beyond_noise)
        out.warnings.push_back(
            "model mismatch: negative-going samples beyond 5 sigma");
    return out;
}

// ---------------------------------------------------------------------------
// Histogram fit

HistogramFit fit_gaussian_histogram(const std::vector<double>& values) {
    if (values.size() < 30)
        throw InvalidInput("fit_gaussian_histogram: need at least 30 samples");
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();

    auto quantile = [&](double q) {
        const double pos = q * (n - 1);
        const std::size_t i = static_cast<std::size_t>(pos);
        const double f = pos - i;
        return i + 1 < n ? v[i] * (1.0 - f) + v[i + 1] * f : v[i];
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    if (!(iqr > 0.0) || v.back() == v.front())
        throw ZeroSigmaError("fit_gaussian_histogram: degenerate (all-equal) samples");

    const double width = 2.0 * iqr / std::cbrt(static_cast<double>(n));
    std::size_t nbins = static_cast<std::size_t>(
        std::ceil((v.back() - v.front()) / width));
    nbins = std::clamp<std::size_t>(nbins, 5, 200);
    const double lo = v.front(), hi = v.back();
    const double bw = (hi - lo) / nbins;

    std::vector<double> centers(nbins), counts(nbins, 0.0);
    for (std::size_t i = 0; i < nbins; ++i) centers[i] = lo + (i + 0.5) * bw;
    for (double x : values) {
        std::size_t b = x >= hi ? nbins - 1
                                : static_cast<std::size_t>((x - lo) / bw);
        counts[b] += 1.0;
    }

    double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double var = 0.0;
    for (double x : values) var += sq(x - mean);
    var /= (n - 1);
    const double sample_std = std::sqrt(var);

    CurveData d;
    d.x = centers;
    d.y = counts;
    d.sigma.resize(nbins);
    for (std::size_t i = 0; i < nbins; ++i)
        d.sigma[i] = std::sqrt(std::max(counts[i], 1.0));

    const ModelFn& model = shapes::kGaussian;
    const ModelGradFn& grad = shapes::kGaussianGrad;
    Eigen::VectorXd init(3);
    init << mean, sample_std, *std::max_element(counts.begin(), counts.end());
    FitOptions opt;
    opt.lower = Eigen::VectorXd(3);
    opt.lower << lo - (hi - lo), 1e-6 * sample_std, 0.0;
    opt.upper = Eigen::VectorXd(3);
    opt.upper << hi + (hi - lo), 10.0 * (hi - lo), 10.0 * static_cast<double>(n);

    HistogramFit out;
    out.fit = fit_curve(model, d, init, {"mean", "sigma", "amplitude"}, grad, opt);
    out.sample_mean = mean;
    out.sample_std = sample_std;
    const double dof = std::max(1.0, static_cast<double>(nbins) - 3.0);
    out.chi2_tail_prob = gamma_q(dof / 2.0, out.fit.residual_norm / 2.0);
    out.shape_flagged = out.chi2_tail_prob < 0.01;
    if (out.shape_flagged)
        out.fit.warnings.push_back(
            "histogram shape rejected by chi-square test at p = 0.01");
    return out;
}

// ---------------------------------------------------------------------------
// Calibration fits

FitResult fit_rabi_calibration(const std::vector<RabiCalibrationPoint>& points,
                               double gamma_r, double f01_hz) {
    if (points.size() < 3)
        throw InvalidInput("fit_rabi_calibration: need at least 3 points");
    if (!(gamma_r > 0.0) || !(f01_hz > 0.0))
        throw InvalidInput("fit_rabi_calibration: gamma_r and f01 must be > 0");

    // rabi = slope * sqrt(P_watts); through-origin least squares.
    double sxx = 0.0, sxy = 0.0;
    for (const auto& pt : points) {
        const double x = std::sqrt(dbm_to_watts(pt.p_dbm));
        sxx += x * x;
        sxy += x * pt.rabi;
    }
    const double slope = sxy / sxx;
    double ss = 0.0;
    for (const auto& pt : points) {
        const double x = std::sqrt(dbm_to_watts(pt.p_dbm));
        ss += sq(pt.rabi - slope * x);
    }
    const double var_slope = ss / (static_cast<double>(points.size()) - 1.0) / sxx;

    // rabi = 2 sqrt(A gamma_r P / (h f01)) => A = slope^2 h f01 / (4 gamma_r).
    const double a_lin = slope * slope * kPlanck * f01_hz / (4.0 * gamma_r);
    if (a_lin >= 1.0)
        throw InvalidInput(
            "fit_rabi_calibration: inferred gain instead of attenuation");
    const double att_db = linear_to_db(a_lin);
    // d(att)/d(slope) = 20 / (slope ln 10)
    const double sigma_att =
        20.0 / (std::abs(slope) * std::log(10.0)) * std::sqrt(std::max(0.0, var_slope));

    FitResult out;
    out.names = {"attenuation_db"};
    out.params = Eigen::VectorXd(1);
    out.params << att_db;
    out.covariance = Eigen::MatrixXd(1, 1);
    out.covariance << sigma_att * sigma_att;
    out.residual_norm = ss;
    out.n_iter = 1;
    out.converged = true;
    out.n_points = points.size();
    return out;
}

FluxArchFit fit_flux_arch(const std::vector<FluxArchPoint>& points, double ec_hz) {
    if (!(ec_hz > 0.0)) throw InvalidInput("fit_flux_arch: ec must be > 0");
    if (points.empty()) throw InvalidInput("fit_flux_arch: no points");

    FluxArchFit out;
    std::vector<FluxArchPoint> used;
    double min_cos = 1.0;
    for (const auto& p : points) {
        const double c = std::abs(std::cos(M_PI * p.flux));
        // Keep only points where the dispersive formula can stay valid for
        // any plausible ej_max; borderline flux values are filtered.
        if (c < 1e-3) {
            ++out.n_filtered;
            continue;
        }
        min_cos = std::min(min_cos, c);
        used.push_back(p);
    }
    if (used.empty())
        throw InvalidInput("fit_flux_arch: all points in the invalid flux region");
    if (out.n_filtered > 0)
        out.fit.warnings.push_back("filtered points outside the validity region");

    // Seed from the highest-frequency point.
    const auto& top = *std::max_element(
        used.begin(), used.end(),
        [](const FluxArchPoint& a, const FluxArchPoint& b) {
            return a.f01_hz < b.f01_hz;
        });
    const double ej0 = sq(top.f01_hz + ec_hz) /
                       (8.0 * ec_hz * std::abs(std::cos(M_PI * top.flux)));

    CurveData d;
    for (const auto& p : used) {
        d.x.push_back(p.flux);
        d.y.push_back(p.f01_hz);
    }
    ModelFn model = shapes::flux_arch(ec_hz);
    ModelGradFn grad = shapes::flux_arch_grad(ec_hz);
    Eigen::VectorXd init(1);
    init << ej0;
    FitOptions opt;
    opt.lower = Eigen::VectorXd(1);
    opt.lower << ec_hz / (8.0 * min_cos) * 1.01;
    opt.upper = Eigen::VectorXd(1);
    opt.upper << 1e6 * ec_hz;
    std::vector<std::string> warn = out.fit.warnings;
    out.fit = fit_curve(model, d, init, {"ej_max_hz"}, grad, opt);
    out.fit.warnings.insert(out.fit.warnings.end(), warn.begin(), warn.end());

    // Flux coverage is advisory: a single point still determines the single
    // parameter.
    if (used.size() > 1) {
        auto [lo, hi] = std::minmax_element(
            d.x.begin(), d.x.end());
        if (*hi - *lo < 0.3)
            out.fit.warnings.push_back("flux span below 0.3 flux quanta");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rate combination

namespace {

Uncertain u_sub(Uncertain a, Uncertain b) {
    return Uncertain{a.value - b.value, std::hypot(a.sigma, b.sigma)};
}

Uncertain u_add(Uncertain a, Uncertain b) {
    return Uncertain{a.value + b.value, std::hypot(a.sigma, b.sigma)};
}

}  // namespace

CombinedRates combine_rates(const PartialRates& measured, Uncertain gamma_r_ref) {
    CombinedRates out;
    out.gamma_r = measured.gamma_r.value_or(gamma_r_ref);

    if (measured.gamma_1)
        out.gamma_1 = *measured.gamma_1;
    else if (measured.gamma_n)
        out.gamma_1 = u_add(out.gamma_r, *measured.gamma_n);
    else
        throw InvalidInput("combine_rates: need gamma_1 or gamma_n");

    out.gamma_n = measured.gamma_n ? *measured.gamma_n
                                   : u_sub(out.gamma_1, out.gamma_r);

    const Uncertain half_g1{0.5 * out.gamma_1.value, 0.5 * out.gamma_1.sigma};
    if (measured.gamma_phi) {
        out.gamma_phi = *measured.gamma_phi;
        out.gamma_2 = measured.gamma_2 ? *measured.gamma_2
                                       : u_add(half_g1, out.gamma_phi);
    } else if (measured.gamma_2) {
        out.gamma_2 = *measured.gamma_2;
        out.gamma_phi = u_sub(out.gamma_2, half_g1);
    } else {
        throw InvalidInput("combine_rates: need gamma_phi or gamma_2");
    }

    for (const auto& [name, u] :
         {std::pair<const char*, Uncertain>{"gamma_n", out.gamma_n},
          {"gamma_phi", out.gamma_phi}}) {
        if (u.value < -2.0 * u.sigma) {
            std::ostringstream msg;
            msg << "physicality: " << name << " negative beyond 2 sigma ("
                << u.value << " +- " << u.sigma << ")";
            out.warnings.push_back(msg.str());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Derivative verification registry

std::vector<AnalyticModel> analytic_gradient_models() {
    std::vector<AnalyticModel> out;
    const double rate = kTwoPi * 1e5;  // representative angular scale

    out.push_back({"phase_roll", shapes::phase_roll(1.0), shapes::phase_roll_grad(1.0),
                   [rate](RandomStream& rng, double& x, Eigen::VectorXd& p) {
                       p.resize(3);
                       p << 2.0 * (rng.uniform() - 0.5), rate * rng.uniform(),
                           rate * (0.2 + rng.uniform());
                       x = p[1] + rate * 4.0 * (rng.uniform() - 0.5);
                   }});
    out.push_back({"triplet", shapes::kTriplet, shapes::kTripletGrad,
                   [rate](RandomStream& rng, double& x, Eigen::VectorXd& p) {
                       p.resize(9);
                       for (int k = 0; k < 3; ++k) {
                           p[3 * k] = 0.1 + rng.uniform();
                           p[3 * k + 1] = rate * 20.0 * (k - 1) +
                                          rate * (rng.uniform() - 0.5);
                           p[3 * k + 2] = rate * (0.5 + rng.uniform());
                       }
                       x = rate * 50.0 * (rng.uniform() - 0.5);
                   }});
    out.push_back({"incoh_power", shapes::kIncohPower, shapes::kIncohPowerGrad,
                   [rate](RandomStream& rng, double& x, Eigen::VectorXd& p) {
                       p.resize(3);
                       p << rate * (0.5 + rng.uniform()),
                           sq(rate) * (0.5 + rng.uniform()),
                           sq(rate) * 0.01 * rng.uniform();
                       x = rate * (0.05 + 10.0 * rng.uniform());
                   }});
    out.push_back({"loss_power", shapes::kLossPower, shapes::kLossPowerGrad,
                   [rate](RandomStream& rng, double& x, Eigen::VectorXd& p) {
                       p.resize(2);
                       p << rate * (0.1 + rng.uniform()),
                           sq(rate) * (0.5 + rng.uniform());
                       x = rate * (0.05 + 10.0 * rng.uniform());
                   }});
    out.push_back({"decay", shapes::kDecay, shapes::kDecayGrad,
                   [rate](RandomStream& rng, double& x, Eigen::VectorXd& p) {
                       p.resize(2);
                       p << 0.1 + rng.uniform(), rate * (0.2 + rng.uniform());
                       x = 4.0 * rng.uniform() / rate;
                   }});
    out.push_back({"power_decay", shapes::kPowerDecay, shapes::kPowerDecayGrad,
                   [rate](RandomStream& rng, double& x, Eigen::VectorXd& p) {
                       p.resize(2);
                       p << rate * (0.2 + rng.uniform()), 0.1 + rng.uniform();
                       x = 4.0 * rng.uniform() / rate;
                   }});
    out.push_back({"phase_line", shapes::kPhaseLine, shapes::kPhaseLineGrad,
                   [rate](RandomStream& rng, double& x, Eigen::VectorXd& p) {
                       p.resize(2);
                       p << 2.0 * (rng.uniform() - 0.5), rate * rng.uniform();
                       x = 4.0 * rng.uniform() / rate;
                   }});
    out.push_back({"gaussian", shapes::kGaussian, shapes::kGaussianGrad,
                   [rate](RandomStream& rng, double& x, Eigen::VectorXd& p) {
                       p.resize(3);
                       p << rate * (rng.uniform() - 0.5), rate * (0.1 + rng.uniform()),
                           1.0 + 10.0 * rng.uniform();
                       x = p[0] + 3.0 * p[1] * (rng.uniform() - 0.5);
                   }});
    out.push_back({"flux_arch", shapes::flux_arch(252e6), shapes::flux_arch_grad(252e6),
                   [](RandomStream& rng, double& x, Eigen::VectorXd& p) {
                       p.resize(1);
                       p << 16.56e9 * (0.5 + rng.uniform());
                       x = 0.8 * (rng.uniform() - 0.5);
                   }});
    return out;
}

}  // namespace ratefit
