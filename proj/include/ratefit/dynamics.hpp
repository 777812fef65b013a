#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ratefit/types.hpp"

namespace ratefit {

// Time-domain integration of the rotating-frame Bloch equations
//   d/dt (s1, s1*, s2) = M (s1, s1*, s2) + B,
// the two-time correlation system sharing the same generator, and the
// numeric resolvent spectrum that serves as the oracle for the closed form.

using Vector3c = Eigen::Vector3cd;
using Matrix3c = Eigen::Matrix3cd;

/// Generator of the Bloch equations. A signed Rabi amplitude is accepted here
/// (the pulse preparation path uses it to fix the rotation phase convention).
struct BlochGenerator {
    Matrix3c m;
    Vector3c b;
};

BlochGenerator bloch_generator(double delta, double rabi, const RateSet& rates);

struct IntegratorOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double initial_step = 0.0;  // 0 = automatic
    std::size_t max_steps = 50'000'000;
};

/// One embedded Dormand-Prince 5(4) step. Returns the 5th-order update and
/// the embedded error estimate; exposed so tests can measure the order.
struct RkStep {
    Vector3c y;
    Vector3c error;
};

template <typename Rhs>
RkStep rk45_step(const Rhs& rhs, double t, const Vector3c& y, double h);

/// Integrate dy/dt = m y + b from t_grid.front() through every grid point.
/// Throws IntegrationError (with the last good time) on step underflow.
std::vector<Vector3c> integrate_linear(const BlochGenerator& gen,
                                       const Vector3c& y0,
                                       const std::vector<double>& t_grid,
                                       const IntegratorOptions& opts = {});

/// n_steps uniform embedded-RK steps with no adaptation; used to measure the
/// integrator's convergence order.
Vector3c integrate_fixed(const BlochGenerator& gen, const Vector3c& y0,
                         double t0, double t1, int n_steps);

struct BlochTrajectory {
    std::vector<double> t_grid;
    std::vector<BlochVector> states;
};

/// Solve the Bloch equations from an initial state over t_grid.
BlochTrajectory bloch_integrate(const BlochVector& initial,
                                const DriveConfig& drive, const RateSet& rates,
                                const std::vector<double>& t_grid,
                                const IntegratorOptions& opts = {});

struct CorrelationTrajectory {
    std::vector<double> tau_grid;
    std::vector<Complex> s3;
    std::vector<Complex> s4;
    std::vector<Complex> s5;
};

/// Two-time correlation components from the quantum regression theorem,
/// integrated from s3(0) = s2_ss, s4(0) = s5(0) = 0.
CorrelationTrajectory correlation_trajectory(const DriveConfig& drive,
                                             const RateSet& rates,
                                             const std::vector<double>& tau_grid,
                                             const IntegratorOptions& opts = {});

/// Incoherent PSD by direct resolvent solve,
///   I(omega) = -[M + i (omega - omega_p) 1]^-1 dS(0),
/// with the same sum-rule normalization as the closed form. This is the
/// independent oracle for incoherent_spectrum.
double spectrum_numeric(double omega, const DriveConfig& drive,
                        const RateSet& rates);

/// Incoherent PSD from direct Fourier quadrature of the correlation decay
/// delta_s3(tau), truncated at tau_max_over_gamma2 / Gamma_2. Slower third
/// route used for regression tests only.
std::vector<double> spectrum_from_correlation(const std::vector<double>& omega_grid,
                                              const DriveConfig& drive,
                                              const RateSet& rates,
                                              double tau_max_over_gamma2 = 50.0);

struct PulseConfig {
    bool instantaneous = true;
    double duration_s = 0.0;  // used when instantaneous == false
};

/// Bloch vector after an x-rotation by `angle` from the ground state.
/// Instantaneous pulses are perfect rotations (pi/2 -> s1 = i/2, s2 = 1/2);
/// finite pulses integrate the Bloch equations with rabi = angle/duration so
/// decay during the pulse is included.
BlochVector pulse_prepare(double angle, const PulseConfig& cfg = {},
                          const RateSet& rates = {});

/// Free-decay emission amplitude after a pi/2 pulse detuned by delta_pulse =
/// omega_q - omega_pulse: scale * exp(-Gamma_2 tau) exp(-i delta_pulse tau).
ComplexTrace ramsey_emission(double delta_pulse, const RateSet& rates,
                             const std::vector<double>& t_grid,
                             double scale = 0.5);

/// Emitted power after population inversion to initial_sz:
/// (Gamma_r / 2)(1 + initial_sz) exp(-Gamma_1 tau), in photon-flux units.
ComplexTrace t1_power_trace(const RateSet& rates,
                            const std::vector<double>& t_grid,
                            double initial_sz);

}  // namespace ratefit
