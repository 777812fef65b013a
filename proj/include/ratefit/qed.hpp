#pragma once

#include <vector>

#include "ratefit/types.hpp"

namespace ratefit {

// Closed-form physics of a driven two-level emitter at the end of a 1D
// waveguide (atom in front of a mirror). Everything here is a pure function
// of its arguments; rates and frequencies are angular (rad/s).

/// Gamma_1, Gamma_2 and the derived coupling figures of merit.
DerivedRates derive_rates(const RateSet& rates);

/// Transmon |0>-|1> frequency in Hz: sqrt(8 E_J(flux) E_C) - E_C with
/// E_J(flux) = E_J,max |cos(pi flux)|. Throws ValidityError outside the
/// dispersive regime 8 E_J E_C > E_C^2.
double transmon_frequency(const TransmonParams& params);

/// Stationary Bloch vector of the driven, damped qubit.
BlochVector steady_state(const DriveConfig& drive, const RateSet& rates);

enum class ReflectionMode {
    Full,       // arbitrary drive strength and detuning
    WeakProbe,  // linear response, rabi ignored
    Resonant,   // delta = 0, arbitrary drive strength
};

/// Coherent reflection coefficient of the probe.
Complex reflection_coefficient(const DriveConfig& drive, const RateSet& rates,
                               ReflectionMode mode);

/// Incoherent emission PSD evaluated from the closed-form two-time spectrum.
/// The normalization is fixed by the sum rule
///   integral S_i domega = Gamma_r (s2_ss - |s1_ss|^2),
/// i.e. the spectrum integrates to the incoherent output flux.
Spectrum incoherent_spectrum(const std::vector<double>& omega_grid,
                             const DriveConfig& drive, const RateSet& rates);

/// Single-point closed-form PSD on the detuning axis d01 = omega - omega_q.
/// This is the kernel behind incoherent_spectrum and the spectral fitters.
double incoherent_psd_at(double d01, double delta, double rabi,
                         const RateSet& rates);

/// Strong-resonant-drive three-Lorentzian approximation (central HWHM
/// Gamma_2, sidebands at +-rabi with HWHM (Gamma_1+Gamma_2)/2), same
/// sum-rule normalization as incoherent_spectrum. Requires delta = 0 and
/// rabi > validity_factor * Gamma_2.
Spectrum mollow_triplet_approx(const std::vector<double>& omega_grid,
                               const DriveConfig& drive, const RateSet& rates,
                               double validity_factor = 5.0);

enum class DressedMixing {
    // Golden-rule rate from the dephasing dissipator (Gamma_phi/2) D[sz]:
    // (Gamma_phi/2) |<n,+|sz|n,->|^2 = 2 Gamma_phi sin^2 cos^2. Reproduces
    // the exact spectral sideband fluxes to well under a percent in the
    // resolved-triplet regime.
    MatrixElement,
    // Bare Gamma_phi as the intra-doublet rate. Kept selectable for
    // comparison; overestimates the asymmetry off resonance.
    Literal,
};

/// Dressed-doublet transition rates, stationary occupations and sideband
/// asymmetry of the driven qubit. Requires rabi > 0.
DressedModel dressed_asymmetry(const DriveConfig& drive, const RateSet& rates,
                               DressedMixing mixing = DressedMixing::MatrixElement);

/// Resonant-drive power budget: input, coherently and incoherently scattered,
/// and non-radiatively lost photon fluxes. Closure p_in = p_coh + p_incoh +
/// p_loss holds to machine precision.
PowerBudget power_balance(double rabi, const RateSet& rates);

/// Characteristic Rabi frequencies separating the scattering regions.
struct RegionBoundaries {
    double omega_sat;      // saturation onset (1 + 1/sqrt(2)) Gamma_r
    double omega_low;      // P_incoh = P_loss crossover
    double gamma_n_crit;   // Gamma_n above which region (iii) disappears
    std::optional<double> omega_dip;  // coherent-power zero, if it exists
};

RegionBoundaries region_boundaries(const RateSet& rates);

/// Rabi amplitude produced by a source power p_dbm after attenuation_db of
/// line attenuation, via the photon flux at the qubit:
/// rabi = 2 sqrt(Gamma_r flux).
double rabi_from_power(double p_dbm, double attenuation_db, double gamma_r,
                       double f01_hz);

/// Source power (dBm) required for a target Rabi amplitude.
double power_for_rabi(double rabi, double attenuation_db, double gamma_r,
                      double f01_hz);

}  // namespace ratefit
