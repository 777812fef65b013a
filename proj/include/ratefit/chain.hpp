#pragma once

#include <cstdint>
#include <vector>

#include "ratefit/types.hpp"

namespace ratefit {

// Synthetic measurement chain: dB arithmetic, the white system-noise floor,
// averaging statistics, and slow-drift ensembles. All generation is a pure
// function of (config, seed); distinct traces/points use forked streams so
// parallel and serial synthesis produce identical data.

struct ChainConfig {
    double attenuation_db = -145.0;  // input line (negative)
    double gain_db = 115.0;          // output line
    double noise_photons = 49.0;     // system noise N per unit bandwidth
    double n_avg = 1.0;              // number of averages (>= 1)
    double rbw_hz = 0.0;             // PSD resolution bandwidth; 0 = grid spacing
    std::uint64_t seed = 1;

    void validate() const;
};

/// Photon flux (s^-1) carried by p_dbm at frequency f01: 10^((p-30)/10)/(h f01).
double dbm_to_photon_flux(double p_dbm, double f01_hz);

/// Inverse of dbm_to_photon_flux.
double photon_flux_to_dbm(double flux, double f01_hz);

/// Add white Gaussian noise to a PSD. Per-point sigma is
/// (psd + floor) / sqrt(n_avg) with floor = N / (2 pi rbw); when rbw_hz is 0
/// the grid spacing is used as the resolution bandwidth.
Spectrum synthesize_noisy_psd(const Spectrum& clean, const ChainConfig& chain);

/// Add noise to a time trace. Amplitude traces get circular complex Gaussian
/// noise with per-quadrature sigma sqrt(N B / (2 n_avg)), B = 1/dt; power
/// traces get real Gaussian noise with sigma (P + N B) / sqrt(n_avg).
ComplexTrace synthesize_noisy_trace(const ComplexTrace& clean,
                                    const ChainConfig& chain);

/// Add complex Gaussian noise with a fixed per-quadrature sigma to reflection
/// samples (VNA-style detection, noise level set directly by the caller).
std::vector<Complex> synthesize_noisy_reflection(const std::vector<Complex>& clean,
                                                 double sigma,
                                                 const ChainConfig& chain);

struct DriftEnsembleSpec {
    std::size_t n_traces = 1;
    double interval_s = 0.0;  // wall-clock spacing between traces (metadata)

    void validate() const;
};

struct DriftDraw {
    RateSet rates;
    double delta_omega01;  // frequency offset from the base qubit frequency
};

/// Independent Gaussian draws per trace around the base rates (truncated at
/// zero) and the qubit frequency; reproducible from the chain seed.
std::vector<DriftDraw> drift_ensemble(const RateSet& base,
                                      double freq_jitter_sigma,
                                      double rate_jitter_sigma,
                                      const DriftEnsembleSpec& spec,
                                      std::uint64_t seed);

}  // namespace ratefit
