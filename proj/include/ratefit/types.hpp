#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "ratefit/errors.hpp"

namespace ratefit {

using Complex = std::complex<double>;

/// Value with a one-sigma uncertainty. sigma == 0 means "exact".
struct Uncertain {
    double value = 0.0;
    double sigma = 0.0;
};

/// The three elementary decoherence channels of the qubit, as angular rates
/// (rad/s). Gamma_1 and Gamma_2 are always derived, never stored.
struct RateSet {
    double gamma_r = 0.0;    // radiative decay into the waveguide
    double gamma_n = 0.0;    // non-radiative decay
    double gamma_phi = 0.0;  // pure dephasing

    // Optional one-sigma uncertainties (0 = exact / not estimated).
    double gamma_r_sigma = 0.0;
    double gamma_n_sigma = 0.0;
    double gamma_phi_sigma = 0.0;

    double gamma_1() const { return gamma_r + gamma_n; }
    double gamma_2() const { return 0.5 * gamma_1() + gamma_phi; }

    /// Waveguide capture fraction Gamma_r / Gamma_1.
    double beta() const;
    /// Purcell enhancement Gamma_r / (Gamma_n + 2 Gamma_phi).
    double purcell() const;

    void validate() const;
};

struct DerivedRates {
    double gamma_1;
    double gamma_2;
    double beta;
    double purcell;
};

/// Coherent drive configuration. delta = omega_p - omega_q (pump minus qubit)
/// fixes the detuning sign convention once for the whole toolkit.
struct DriveConfig {
    double omega_q = 0.0;  // qubit |0>-|1> angular frequency (rad/s)
    double omega_p = 0.0;  // pump angular frequency (rad/s)
    double rabi = 0.0;     // Rabi amplitude (rad/s, >= 0)

    double delta() const { return omega_p - omega_q; }

    void validate() const;
};

/// Flux-tunable transmon parameters. Energies are spectral (Hz, E/h); flux is
/// in units of the flux quantum.
struct TransmonParams {
    double ej_max_hz = 0.0;
    double ec_hz = 0.0;
    double flux = 0.0;

    void validate() const;
};

/// Reduced qubit state: s1 = rho_10 (coherence), s2 = rho_11 (population).
struct BlochVector {
    Complex s1{0.0, 0.0};
    double s2 = 0.0;

    double sz() const { return 2.0 * s2 - 1.0; }

    /// Density-matrix positivity: 0 <= s2 <= 1 and |s1|^2 <= s2 (1 - s2).
    void validate(double tol = 1e-9) const;
};

/// Emission power spectral density on a frequency grid. The grid is the
/// absolute detection frequency (rad/s); psd is photon flux per unit angular
/// frequency. sigma, when present, is the per-point noise standard deviation.
struct Spectrum {
    std::vector<double> omega_grid;
    std::vector<double> psd;
    std::vector<double> sigma;  // empty when noiseless

    std::size_t size() const { return omega_grid.size(); }
    bool has_sigma() const { return !sigma.empty(); }

    void validate() const;
};

enum class TraceRole {
    Amplitude,  // complex emission amplitude samples
    Power,      // real-valued photon flux samples (imaginary part zero)
};

/// Time-domain record of the emitted field (or power) after a pulse.
struct ComplexTrace {
    std::vector<double> t_grid;
    std::vector<Complex> values;
    std::vector<double> sigma;  // per-sample (per-quadrature for Amplitude)
    TraceRole role = TraceRole::Amplitude;

    std::size_t size() const { return t_grid.size(); }
    bool has_sigma() const { return !sigma.empty(); }

    void validate() const;
};

/// Photon-flux budget of the scattering process at resonance. All entries are
/// powers normalized by the single-photon energy (s^-1) and satisfy
/// p_in = p_coh + p_incoh + p_loss.
struct PowerBudget {
    double p_in = 0.0;
    double p_coh = 0.0;
    double p_incoh = 0.0;
    double p_loss = 0.0;
};

/// Dressed-doublet rate model of the driven qubit (relaxation-induced
/// transition rates between the +/- subspaces, dephasing-induced mixing, and
/// the stationary subspace occupations).
struct DressedModel {
    double theta = 0.0;     // mixing angle, (0, pi/2)
    double rate_pp = 0.0;   // Gamma_1 sin^2 cos^2
    double rate_pm = 0.0;   // Gamma_1 cos^4   (+ -> -, upper sideband)
    double rate_mp = 0.0;   // Gamma_1 sin^4   (- -> +, lower sideband)
    double rate_mm = 0.0;   // Gamma_1 sin^2 cos^2
    double mix_rate = 0.0;  // dephasing-induced intra-doublet rate
    double pop_plus = 0.0;
    double pop_minus = 0.0;
    double delta = 0.0;     // drive detuning the model was built at

    /// Photon flux of the upper sideband (emitted at omega_p + sqrt(D^2+O^2)).
    double flux_upper() const { return rate_pm * pop_plus; }
    /// Photon flux of the lower sideband (emitted at omega_p - sqrt(D^2+O^2)).
    double flux_lower() const { return rate_mp * pop_minus; }

    /// Flux of the sideband closer to the bare qubit frequency over the flux
    /// of the farther one. Equals 1 exactly when the mixing rate vanishes.
    double sideband_asymmetry() const {
        // For delta < 0 the qubit sits above the pump, so the upper sideband
        // is the closer one; for delta > 0 it is the lower one. At delta = 0
        // both fluxes are equal and the ratio is 1 either way.
        return delta <= 0.0 ? flux_upper() / flux_lower()
                            : flux_lower() / flux_upper();
    }
};

/// Named parameter estimates with covariance; produced by every fitter.
struct FitResult;  // defined in fit.hpp

}  // namespace ratefit
