#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ratefit/chain.hpp"
#include "ratefit/estimators.hpp"
#include "ratefit/types.hpp"

namespace ratefit {

// File formats of the toolkit. CSV files are UTF-8 with a header row, '.'
// decimal separator and 17 significant digits; frequencies are cyclic (Hz)
// at this boundary, PSD values are per-Hz densities (2 pi times the internal
// per-rad/s values), powers are photon fluxes in s^-1.

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// CSV data records

struct ReflectionData {
    std::vector<double> freq_hz;
    std::vector<Complex> r;
    double sigma = 0.0;  // per-quadrature noise; 0 = noiseless file
};

struct PowersData {
    std::vector<double> rabi_hz;
    std::vector<double> p_in, p_coh, p_incoh, p_loss;
    std::vector<double> sigma_in, sigma_coh, sigma_incoh, sigma_loss;
    bool has_sigma() const { return !sigma_coh.empty(); }
};

// reflection: freq_hz,re_r,im_r[,sigma_re,sigma_im]
void write_reflection_csv(const std::string& path, const ReflectionData& data);
ReflectionData read_reflection_csv(const std::string& path);

// spectrum: detuning_hz,psd[,sigma]; detuning is (omega - omega01)/2pi.
void write_spectrum_csv(const std::string& path, const Spectrum& spectrum,
                        double f01_hz);
Spectrum read_spectrum_csv(const std::string& path, double f01_hz);

// powers: rabi_hz,p_in,p_coh,p_incoh,p_loss[,sigma_in,sigma_coh,sigma_incoh,sigma_loss]
void write_powers_csv(const std::string& path, const PowersData& data);
PowersData read_powers_csv(const std::string& path);

// dynamics: t_s,re_v,im_v[,sigma] (amplitude) or t_s,power[,sigma]
void write_trace_csv(const std::string& path, const ComplexTrace& trace);
ComplexTrace read_trace_csv(const std::string& path);

// ---------------------------------------------------------------------------
// Run configuration (JSON). Unknown keys are rejected with the field path.

struct DeviceConfig {
    double gamma_r_hz = 0.0;
    double gamma_n_hz = 0.0;
    double gamma_phi_hz = 0.0;
    double f01_hz = 0.0;
    std::optional<TransmonParams> transmon;

    RateSet rates() const;  // angular
};

struct ReflectionTask {
    double span_hz = 3e6;
    int n_points = 201;
    double sigma = 0.0;  // per-quadrature sample noise
    bool noiseless = false;
};

struct SpectrumTask {
    double span_hz = 24e6;
    int n_points = 2401;
    double delta_hz = 0.0;
    std::optional<double> rabi_hz;
    std::optional<double> power_dbm;  // alternative drive spec via the chain
    std::optional<double> n_avg;      // overrides chain.n_avg
    bool noiseless = false;
};

struct PowersTask {
    double rabi_min_hz = 20e3;
    double rabi_max_hz = 1119e3;
    int n_points = 50;
    bool log_spacing = true;
    double bw_hz = 5e6;  // detection bandwidth entering the noise floor
    // Relative gain-calibration uncertainty of the absolute power scale; one
    // correlated draw multiplies every power column.
    double calib_sigma_rel = 0.0;
    std::optional<double> n_avg;
    bool noiseless = false;
};

struct DynamicsTask {
    std::string protocol = "ramsey";  // or "t1"
    double t_max_s = 8e-6;
    int n_samples = 160;
    double delta_pulse_hz = 125e3;  // ramsey detuning
    double pulse_duration_s = 0.0;  // 0 = instantaneous preparation
    int n_traces = 1;
    double freq_jitter_hz = 0.0;
    double rate_jitter_hz = 0.0;
    std::optional<double> n_avg;
    std::optional<double> t1_n_avg;  // averaging of the pi-pulse power trace
    bool noiseless = false;
    bool average = true;  // emit the trace averaged over n_traces
};

struct SinglePointTask {
    double rabi_hz = 1119e3;
    double bw_hz = 5e6;
    std::optional<double> n_avg;
};

struct FitTask {
    std::optional<double> f01_hz;  // detuning reference for spectrum data
    std::optional<Uncertain> gamma_r_ref_hz;
    std::optional<Uncertain> gamma_2_ref_hz;
    bool free_amplitude = false;
    bool joint = false;
    std::optional<double> init_gamma_1_hz;
    std::optional<double> init_gamma_phi_hz;
    std::optional<double> init_rabi_hz;
    std::optional<double> init_delta_hz;
    std::optional<double> rabi_hz;       // single-point drive amplitude
    double calib_sigma_rel = 0.0;  // power-scale systematic for scattering fits
    std::optional<int> max_iter;   // cap on fit iterations
};

struct Table1Config {
    ReflectionTask reflection;
    SpectrumTask onres;
    SpectrumTask offres;
    PowersTask scattering;
    SinglePointTask singlepoint;
    DynamicsTask dynamics;
};

struct RunConfig {
    int schema_version = 1;
    std::optional<DeviceConfig> device;
    ChainConfig chain;
    std::optional<ReflectionTask> reflection;
    std::optional<SpectrumTask> spectrum;
    std::optional<PowersTask> powers;
    std::optional<DynamicsTask> dynamics;
    std::optional<FitTask> fit;
    std::optional<Table1Config> table1;
};

RunConfig parse_run_config(const Json& j);
RunConfig load_run_config(const std::string& path);
Json run_config_to_json(const RunConfig& config);

// ---------------------------------------------------------------------------
// Fit-result JSON (frequencies in Hz, dimensionless values as-is)

Json fit_result_to_json(const FitResult& fit, const std::string& kind);
void write_fit_result(const std::string& path, const FitResult& fit,
                      const std::string& kind);

/// Sidecar written next to every simulated data file: resolved config + seed.
void write_sidecar(const std::string& data_path, const RunConfig& config);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace ratefit
