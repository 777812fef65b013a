#pragma once

#include <optional>

#include "ratefit/fit.hpp"
#include "ratefit/rng.hpp"
#include "ratefit/types.hpp"

namespace ratefit {

// Inverse problems: every "fit" in the measurement flow. All fitters are
// deterministic pure functions of (data, init, options) and report one-sigma
// uncertainties from the covariance at the optimum.

/// Indices of local maxima of `values`, applying the tie rules: maxima within
/// one grid step merge to the larger value, exact ties resolve to the lower
/// index.
std::vector<std::size_t> find_local_maxima(const std::vector<double>& values);

// ---------------------------------------------------------------------------
// Reflection circle fit

struct CircleFit {
    FitResult fit;        // omega01, gamma_2, gamma_r, phase offset
    double center_re = 0.0;
    double center_im = 0.0;
    double radius = 0.0;
    double algebraic_rms = 0.0;  // rms distance of samples from the circle
};

/// Weak-probe reflection fit: algebraic (Taubin) circle fit followed by a
/// phase-vs-frequency fit. Returns omega01, gamma_2 from the phase roll and
/// gamma_r = diameter * gamma_2. `sigma` is the per-quadrature noise of the
/// reflection samples (0 = unweighted).
CircleFit circle_fit(const std::vector<double>& omega,
                     const std::vector<Complex>& refl, double sigma = 0.0);

// ---------------------------------------------------------------------------
// Mollow-triplet fits

struct TripletFit {
    FitResult fit;  // per-peak amp/center/hwhm (red, center, blue)
    Uncertain gamma_2;
    Uncertain gamma_s_red;
    Uncertain gamma_s_blue;
    Uncertain gamma_1;  // 2 mean(gamma_s) - gamma_2, full covariance propagation
    Uncertain rabi;     // half the sideband separation
    // Integrated peak areas (analytic Lorentzian area pi * amp * hwhm), in
    // the spectrum's own PSD units times rad/s.
    Uncertain area_red, area_center, area_blue;
};

struct TripletOptions {
    // Reject calls when the sidebands are closer than this many central
    // linewidths (unresolved triplet).
    double min_separation_linewidths = 5.0;
    // Fit the tied four-parameter model (gamma_1, gamma_2, rabi, scale)
    // instead of three independent Lorentzians.
    bool joint = false;
};

/// Resonant-drive triplet fit: three Lorentzians with independent centers,
/// widths and amplitudes (the default), peak positions seeded by a
/// local-maximum scan. Throws ValidityError when the peaks are unresolved.
TripletFit fit_mollow_triplet(const Spectrum& spectrum,
                              const TripletOptions& options = {});

// ---------------------------------------------------------------------------
// Full line-shape fit (off- or on-resonant)

struct SpectrumFitOptions {
    bool free_amplitude = false;  // multiply the model by a free scale factor
    int max_iter = 400;
    // Optional initial guesses (angular). Unset values are seeded from a peak
    // scan of the data.
    std::optional<double> init_gamma_1;
    std::optional<double> init_gamma_phi;
    std::optional<double> init_rabi;
    std::optional<double> init_delta;
};

struct SpectrumFit {
    FitResult fit;  // gamma_1, gamma_phi, rabi, delta [, amplitude]
    Uncertain gamma_1;
    Uncertain gamma_phi;
    Uncertain gamma_2;  // gamma_1/2 + gamma_phi, full covariance
    Uncertain gamma_n;  // gamma_1 - gamma_r_ref
};

/// Fit the exact incoherent line shape with gamma_r fixed to a reference
/// value; the PSD grid must be referenced to the qubit frequency omega_q.
SpectrumFit fit_full_spectrum(const Spectrum& spectrum, double omega_q,
                              Uncertain gamma_r_ref,
                              const SpectrumFitOptions& options = {});

/// Simultaneous fit of two detunings sharing (gamma_1, gamma_phi) with
/// per-trace rabi, delta and amplitude.
SpectrumFit fit_full_spectrum_pair(const Spectrum& a, const Spectrum& b,
                                   double omega_q, Uncertain gamma_r_ref,
                                   const SpectrumFitOptions& options = {});

// ---------------------------------------------------------------------------
// Power-scattering fits

struct PowerCurves {
    std::vector<double> rabi;  // angular Rabi amplitudes
    std::vector<double> p_coh, p_incoh, p_loss;
    std::vector<double> sigma_coh, sigma_incoh, sigma_loss;  // empty = unweighted
    // Relative uncertainty of the absolute power calibration. It is fully
    // correlated across points, so it does not enter the per-point weights;
    // it inflates the amplitude-like rate uncertainties after the fit
    // (the shape parameters g1g2 and g1gphi are scale invariant).
    double calib_sigma_rel = 0.0;
};

struct ScatteringFit {
    FitResult incoh;  // gamma_r, g1g2, g1gphi
    FitResult loss;   // gamma_n, g1g2
    FitResult coh;    // gamma_r, gamma_n, gamma_phi
    RateSet combined;  // gamma_r from incoh, gamma_n from loss, gamma_phi derived
    std::vector<std::string> warnings;  // cross-consistency beyond 5 sigma
};

ScatteringFit fit_scattering_powers(const PowerCurves& curves);

// ---------------------------------------------------------------------------
// Single-point saturated extraction

struct SinglePointRates {
    Uncertain gamma_r;
    Uncertain gamma_n;
    Uncertain gamma_1;
    double correction = 0.0;  // final Gamma_1 Gamma_2 / Omega^2
    int iterations = 0;
};

/// Saturated-regime rates from one (P_loss, P_incoh) pair at Rabi amplitude
/// omega, solving the ~3% self-consistent correction by fixed-point
/// iteration. When gamma_r_ref is given it replaces the P_incoh-derived
/// gamma_r. Throws SaturationError when the correction exceeds 30%.
SinglePointRates single_point_rates(Uncertain p_loss, Uncertain p_incoh,
                                    double omega,
                                    std::optional<Uncertain> gamma_r_ref = {});

// ---------------------------------------------------------------------------
// Time-domain fits

/// Joint magnitude/phase fit of a free-decay amplitude trace:
/// |v| = A exp(-gamma_2 tau), arg v = phase0 - delta_omega tau.
/// Covariance is block diagonal between the two stages.
FitResult fit_complex_decay(const ComplexTrace& trace);

/// P(tau) = p0 exp(-gamma_1 tau) on a power trace.
FitResult fit_exponential_power(const ComplexTrace& trace);

// ---------------------------------------------------------------------------
// Histogram fit

struct HistogramFit {
    FitResult fit;  // mean, sigma, amplitude
    double sample_mean = 0.0;
    double sample_std = 0.0;
    double chi2_tail_prob = 1.0;
    bool shape_flagged = false;  // residual chi-square test at p = 0.01
};

/// Freedman-Diaconis binned histogram with a Gaussian fit; needs >= 30
/// samples. Throws ZeroSigmaError on degenerate input.
HistogramFit fit_gaussian_histogram(const std::vector<double>& values);

// ---------------------------------------------------------------------------
// Calibration fits

struct RabiCalibrationPoint {
    double p_dbm;  // source power
    double rabi;   // measured Rabi amplitude (angular)
};

/// Input-line attenuation from the square-root power law
/// rabi = 2 sqrt(A gamma_r P / (hbar omega01)); linear fit of rabi vs
/// sqrt(P_watts) through the origin. Throws on inferred gain.
FitResult fit_rabi_calibration(const std::vector<RabiCalibrationPoint>& points,
                               double gamma_r, double f01_hz);

struct FluxArchPoint {
    double flux;
    double f01_hz;
};

struct FluxArchFit {
    FitResult fit;  // ej_max_hz
    std::size_t n_filtered = 0;  // points outside the validity region
};

/// One-parameter E_J,max fit of the flux arch with E_C fixed.
FluxArchFit fit_flux_arch(const std::vector<FluxArchPoint>& points,
                          double ec_hz);

// ---------------------------------------------------------------------------
// Rate combination

/// Partial rate estimates produced by one method (unset = not measured).
struct PartialRates {
    std::optional<Uncertain> gamma_r;
    std::optional<Uncertain> gamma_n;
    std::optional<Uncertain> gamma_phi;
    std::optional<Uncertain> gamma_1;
    std::optional<Uncertain> gamma_2;
};

struct CombinedRates {
    Uncertain gamma_r, gamma_n, gamma_phi, gamma_1, gamma_2;
    std::vector<std::string> warnings;  // physicality (negative beyond 2 sigma)
};

/// Fill in the missing rates by the identities gamma_1 = gamma_r + gamma_n,
/// gamma_2 = gamma_1/2 + gamma_phi with first-order independent-error
/// propagation; gamma_r_ref supplies the baseline radiative rate when the
/// method did not measure it.
CombinedRates combine_rates(const PartialRates& measured, Uncertain gamma_r_ref);

// ---------------------------------------------------------------------------
// Derivative verification

/// One analytic-gradient model as used by a fitter, together with a sampler
/// of representative (x, p) evaluation points.
struct AnalyticModel {
    std::string name;
    ModelFn model;
    ModelGradFn grad;
    std::function<void(RandomStream&, double& x, Eigen::VectorXd& p)> sample;
};

/// Every analytic Jacobian the fitters use, exposed so the test suite can
/// verify them against central finite differences.
std::vector<AnalyticModel> analytic_gradient_models();

}  // namespace ratefit
