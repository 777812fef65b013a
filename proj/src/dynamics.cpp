#include "ratefit/dynamics.hpp"

#include <cmath>
#include <sstream>

#include "ratefit/qed.hpp"
#include "ratefit/units.hpp"

namespace ratefit {

namespace {

constexpr Complex kI{0.0, 1.0};

// Dormand-Prince 5(4) tableau.
constexpr double kA21 = 1.0 / 5;
constexpr double kA31 = 3.0 / 40, kA32 = 9.0 / 40;
constexpr double kA41 = 44.0 / 45, kA42 = -56.0 / 15, kA43 = 32.0 / 9;
constexpr double kA51 = 19372.0 / 6561, kA52 = -25360.0 / 2187,
                 kA53 = 64448.0 / 6561, kA54 = -212.0 / 729;
constexpr double kA61 = 9017.0 / 3168, kA62 = -355.0 / 33,
                 kA63 = 46732.0 / 5247, kA64 = 49.0 / 176,
                 kA65 = -5103.0 / 18656;
constexpr double kB1 = 35.0 / 384, kB3 = 500.0 / 1113, kB4 = 125.0 / 192,
                 kB5 = -2187.0 / 6784, kB6 = 11.0 / 84;
// b - b_hat (error weights, k7 = f(t+h, y5)).
constexpr double kE1 = 71.0 / 57600, kE3 = -71.0 / 16695, kE4 = 71.0 / 1920,
                 kE5 = -17253.0 / 339200, kE6 = 22.0 / 525, kE7 = -1.0 / 40;

double error_norm(const Vector3c& err, const Vector3c& y0, const Vector3c& y1,
                  const IntegratorOptions& opts) {
    double acc = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double scale =
            opts.abs_tol +
            opts.rel_tol * std::max(std::abs(y0[i]), std::abs(y1[i]));
        const double e = std::abs(err[i]) / scale;
        acc += e * e;
    }
    return std::sqrt(acc / 3.0);
}

}  // namespace

template <typename Rhs>
RkStep rk45_step(const Rhs& rhs, double t, const Vector3c& y, double h) {
    const Vector3c k1 = rhs(t, y);
    const Vector3c k2 = rhs(t + h * kA21, y + h * (kA21 * k1));
    const Vector3c k3 = rhs(t + h * 0.3, y + h * (kA31 * k1 + kA32 * k2));
    const Vector3c k4 =
        rhs(t + h * 0.8, y + h * (kA41 * k1 + kA42 * k2 + kA43 * k3));
    const Vector3c k5 = rhs(t + h * (8.0 / 9),
                            y + h * (kA51 * k1 + kA52 * k2 + kA53 * k3 + kA54 * k4));
    const Vector3c k6 = rhs(
        t + h, y + h * (kA61 * k1 + kA62 * k2 + kA63 * k3 + kA64 * k4 + kA65 * k5));
    RkStep out;
    out.y = y + h * (kB1 * k1 + kB3 * k3 + kB4 * k4 + kB5 * k5 + kB6 * k6);
    const Vector3c k7 = rhs(t + h, out.y);
    out.error = h * (kE1 * k1 + kE3 * k3 + kE4 * k4 + kE5 * k5 + kE6 * k6 +
                     kE7 * k7);
    return out;
}

// The only instantiation used outside tests integrates the linear system.
namespace {

struct LinearRhs {
    const BlochGenerator* gen;
    Vector3c operator()(double, const Vector3c& y) const {
        return gen->m * y + gen->b;
    }
};

}  // namespace

template RkStep rk45_step<LinearRhs>(const LinearRhs&, double, const Vector3c&,
                                     double);

BlochGenerator bloch_generator(double delta, double rabi, const RateSet& rates) {
    const double g1 = rates.gamma_1();
    const double g2 = rates.gamma_2();
    BlochGenerator gen;
    gen.m << Complex{-g2, delta}, 0.0, kI * rabi,
             0.0, Complex{-g2, -delta}, -kI * rabi,
             kI * rabi / 2.0, -kI * rabi / 2.0, Complex{-g1, 0.0};
    gen.b << -kI * rabi / 2.0, kI * rabi / 2.0, 0.0;
    return gen;
}

std::vector<Vector3c> integrate_linear(const BlochGenerator& gen,
                                       const Vector3c& y0,
                                       const std::vector<double>& t_grid,
                                       const IntegratorOptions& opts) {
    if (t_grid.empty()) throw InvalidInput("integrate_linear: empty time grid");
    for (std::size_t i = 0; i + 1 < t_grid.size(); ++i)
        if (!(t_grid[i] < t_grid[i + 1]))
            throw InvalidInput("integrate_linear: time grid must be strictly increasing");

    const LinearRhs rhs{&gen};
    std::vector<Vector3c> out;
    out.reserve(t_grid.size());
    out.push_back(y0);

    // Characteristic rate for the automatic initial step.
    const double rate_scale = std::max(gen.m.cwiseAbs().maxCoeff(), 1e-300);
    double h = opts.initial_step > 0.0 ? opts.initial_step : 0.1 / rate_scale;

    Vector3c y = y0;
    double t = t_grid.front();
    std::size_t steps = 0;

    for (std::size_t k = 1; k < t_grid.size(); ++k) {
        const double t_end = t_grid[k];
        while (t < t_end) {
            const double h_try = std::min(h, t_end - t);
            const RkStep step = rk45_step(rhs, t, y, h_try);
            const double err = error_norm(step.error, y, step.y, opts);
            if (err <= 1.0) {
                t += h_try;
                y = step.y;
                const double grow =
                    err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
                h = h_try * std::min(5.0, std::max(0.2, grow));
            } else {
                h = h_try * std::max(0.2, 0.9 * std::pow(err, -0.2));
            }
            if (h < 1e-15 * std::max(std::abs(t), 1.0 / rate_scale)) {
                std::ostringstream msg;
                msg << "integrate_linear: step size underflow at t = " << t;
                throw IntegrationError(msg.str(), t);
            }
            if (++steps > opts.max_steps)
                throw IntegrationError("integrate_linear: max step count exceeded", t);
        }
        out.push_back(y);
    }
    return out;
}

Vector3c integrate_fixed(const BlochGenerator& gen, const Vector3c& y0,
                         double t0, double t1, int n_steps) {
    if (n_steps < 1) throw InvalidInput("integrate_fixed: n_steps must be >= 1");
    const LinearRhs rhs{&gen};
    const double h = (t1 - t0) / n_steps;
    Vector3c y = y0;
    for (int i = 0; i < n_steps; ++i)
        y = rk45_step(rhs, t0 + i * h, y, h).y;
    return y;
}

BlochTrajectory bloch_integrate(const BlochVector& initial,
                                const DriveConfig& drive, const RateSet& rates,
                                const std::vector<double>& t_grid,
                                const IntegratorOptions& opts) {
    drive.validate();
    rates.validate();
    initial.validate();
    const BlochGenerator gen = bloch_generator(drive.delta(), drive.rabi, rates);
    Vector3c y0;
    y0 << initial.s1, std::conj(initial.s1), Complex{initial.s2, 0.0};
    const std::vector<Vector3c> ys = integrate_linear(gen, y0, t_grid, opts);

    BlochTrajectory traj;
    traj.t_grid = t_grid;
    traj.states.reserve(ys.size());
    for (const Vector3c& y : ys)
        traj.states.push_back(BlochVector{y[0], y[2].real()});
    return traj;
}

CorrelationTrajectory correlation_trajectory(const DriveConfig& drive,
                                             const RateSet& rates,
                                             const std::vector<double>& tau_grid,
                                             const IntegratorOptions& opts) {
    drive.validate();
    rates.validate();
    if (tau_grid.empty() || tau_grid.front() != 0.0)
        throw InvalidInput("correlation_trajectory: tau grid must start at 0");
    const BlochVector ss = steady_state(drive, rates);
    BlochGenerator gen = bloch_generator(drive.delta(), drive.rabi, rates);
    // Quantum regression: the same generator M, but the inhomogeneity picks
    // up the stationary <sigma_+>, so the fixed point is s1_ss^* (s1, s1^*,
    // s2) = (|s1|^2, (s1^*)^2, s1^* s2).
    gen.b *= std::conj(ss.s1);
    Vector3c y0;
    y0 << Complex{ss.s2, 0.0}, 0.0, 0.0;
    const std::vector<Vector3c> ys = integrate_linear(gen, y0, tau_grid, opts);

    CorrelationTrajectory corr;
    corr.tau_grid = tau_grid;
    corr.s3.reserve(ys.size());
    corr.s4.reserve(ys.size());
    corr.s5.reserve(ys.size());
    for (const Vector3c& y : ys) {
        corr.s3.push_back(y[0]);
        corr.s4.push_back(y[1]);
        corr.s5.push_back(y[2]);
    }
    return corr;
}

double spectrum_numeric(double omega, const DriveConfig& drive,
                        const RateSet& rates) {
    drive.validate();
    rates.validate();
    const BlochVector ss = steady_state(drive, rates);
    const Complex s1c = std::conj(ss.s1);

    const BlochGenerator gen = bloch_generator(drive.delta(), drive.rabi, rates);
    const double nu = omega - drive.omega_p;
    Matrix3c a = gen.m;
    a.diagonal().array() += kI * nu;

    Vector3c ds0;
    ds0 << Complex{ss.s2 - std::norm(ss.s1), 0.0}, -s1c * s1c, -s1c * ss.s2;

    Eigen::PartialPivLU<Matrix3c> lu(a);
    const double det = std::abs(lu.determinant());
    const double scale = std::pow(a.cwiseAbs().maxCoeff(), 3);
    if (!(det > 1e-14 * scale)) {
        std::ostringstream msg;
        msg << "spectrum_numeric: singular resolvent at omega - omega_p = "
            << nu << " rad/s";
        throw SingularityError(msg.str());
    }
    const Vector3c i_vec = -lu.solve(ds0);
    return rates.gamma_r / M_PI * i_vec[0].real();
}

std::vector<double> spectrum_from_correlation(const std::vector<double>& omega_grid,
                                              const DriveConfig& drive,
                                              const RateSet& rates,
                                              double tau_max_over_gamma2) {
    drive.validate();
    rates.validate();
    const double g2 = rates.gamma_2();
    if (g2 <= 0.0)
        throw InvalidInput("spectrum_from_correlation: needs Gamma_2 > 0");

    // Sampling fine enough that trapezoidal quadrature of the oscillatory
    // integrand is accurate to ~1e-5; truncation at tau_max leaves a tail
    // of order exp(-tau_max_over_gamma2).
    double nu_max = 0.0;
    for (double w : omega_grid)
        nu_max = std::max(nu_max, std::abs(w - drive.omega_p));
    const double w_char = std::max({drive.rabi + rates.gamma_1(),
                                    std::abs(drive.delta()), nu_max, 10.0 * g2});
    const double tau_max = tau_max_over_gamma2 / g2;
    const double dt = 0.015 / w_char;
    const std::size_t n = static_cast<std::size_t>(std::ceil(tau_max / dt)) + 1;

    std::vector<double> tau(n);
    for (std::size_t i = 0; i < n; ++i)
        tau[i] = tau_max * static_cast<double>(i) / static_cast<double>(n - 1);

    const CorrelationTrajectory corr = correlation_trajectory(drive, rates, tau);
    const BlochVector ss = steady_state(drive, rates);
    const Complex s3_inf{std::norm(ss.s1), 0.0};

    std::vector<Complex> ds3(n);
    for (std::size_t i = 0; i < n; ++i) ds3[i] = corr.s3[i] - s3_inf;

    const double h = tau[1] - tau[0];
    std::vector<double> out;
    out.reserve(omega_grid.size());
    for (double w : omega_grid) {
        const double nu = w - drive.omega_p;
        Complex acc = 0.5 * (ds3[0] + ds3[n - 1] * std::polar(1.0, nu * tau[n - 1]));
        for (std::size_t i = 1; i + 1 < n; ++i)
            acc += ds3[i] * std::polar(1.0, nu * tau[i]);
        out.push_back(rates.gamma_r / M_PI * (acc * h).real());
    }
    return out;
}

BlochVector pulse_prepare(double angle, const PulseConfig& cfg,
                          const RateSet& rates) {
    if (!(angle >= 0.0 && angle <= M_PI))
        throw InvalidInput("pulse_prepare: angle must lie in [0, pi]");
    if (cfg.instantaneous) {
        BlochVector s;
        s.s1 = kI * 0.5 * std::sin(angle);
        s.s2 = std::sin(angle / 2.0) * std::sin(angle / 2.0);
        return s;
    }
    if (!(cfg.duration_s > 0.0))
        throw InvalidInput("pulse_prepare: finite pulse needs duration > 0");
    rates.validate();
    if (angle == 0.0) return BlochVector{};
    // Negative drive amplitude rotates about -x, matching the instantaneous
    // convention s1(pi/2) = +i/2.
    const BlochGenerator gen =
        bloch_generator(0.0, -angle / cfg.duration_s, rates);
    Vector3c y0 = Vector3c::Zero();
    const std::vector<double> grid{0.0, cfg.duration_s};
    const std::vector<Vector3c> ys = integrate_linear(gen, y0, grid);
    return BlochVector{ys.back()[0], ys.back()[2].real()};
}

ComplexTrace ramsey_emission(double delta_pulse, const RateSet& rates,
                             const std::vector<double>& t_grid, double scale) {
    rates.validate();
    const double g2 = rates.gamma_2();
    ComplexTrace trace;
    trace.role = TraceRole::Amplitude;
    trace.t_grid = t_grid;
    trace.values.reserve(t_grid.size());
    for (double t : t_grid)
        trace.values.push_back(scale * std::exp(-g2 * t) *
                               std::polar(1.0, -delta_pulse * t));
    trace.validate();
    return trace;
}

ComplexTrace t1_power_trace(const RateSet& rates,
                            const std::vector<double>& t_grid,
                            double initial_sz) {
    rates.validate();
    if (!(initial_sz >= -1.0 && initial_sz <= 1.0))
        throw InvalidInput("t1_power_trace: initial_sz must lie in [-1, 1]");
    const double g1 = rates.gamma_1();
    const double p0 = 0.5 * rates.gamma_r * (1.0 + initial_sz);
    ComplexTrace trace;
    trace.role = TraceRole::Power;
    trace.t_grid = t_grid;
    trace.values.reserve(t_grid.size());
    for (double t : t_grid)
        trace.values.push_back(Complex{p0 * std::exp(-g1 * t), 0.0});
    trace.validate();
    return trace;
}

}  // namespace ratefit
