#pragma once

#include "ratefit/io.hpp"

namespace ratefit {

// Batch orchestration behind the CLI: forward-model synthesis for each data
// kind and the six-method cross-validation pipeline. Everything is a pure
// function of (config, seed); the dynamics ensemble parallelizes across
// traces without changing results.

ReflectionData simulate_reflection(const DeviceConfig& device,
                                   const ReflectionTask& task,
                                   const ChainConfig& chain);

Spectrum simulate_spectrum(const DeviceConfig& device, const SpectrumTask& task,
                           const ChainConfig& chain);

PowersData simulate_powers(const DeviceConfig& device, const PowersTask& task,
                           const ChainConfig& chain);

struct DynamicsEnsemble {
    std::vector<ComplexTrace> traces;  // per-trace noisy data
    ComplexTrace average;              // mean over traces (ramsey protocol)
};

DynamicsEnsemble simulate_dynamics(const DeviceConfig& device,
                                   const DynamicsTask& task,
                                   const ChainConfig& chain);

// ---------------------------------------------------------------------------
// cross-method pipeline

struct MethodRow {
    std::string method;
    bool ok = false;
    std::string error;
    std::optional<Uncertain> gamma_r, gamma_n, gamma_phi, gamma_1, gamma_2;
    std::vector<std::string> warnings;
};

struct Table1Report {
    std::vector<MethodRow> rows;
    RateSet ground_truth;
    bool all_consistent_2sigma = false;
    std::string worst_pair;  // empty when consistent
    double worst_pair_sigma = 0.0;
    // Dynamics-row extras for the stability study.
    double gamma2_hist_mean = 0.0;   // per-trace fitted gamma_2, sample mean
    double gamma2_hist_sigma = 0.0;  // Gaussian width of the histogram
    double gamma2_trace_error = 0.0; // median per-trace one-sigma error
    double delta_omega_hist_mean = 0.0;
    double delta_omega_hist_sigma = 0.0;
};

Table1Report run_table1(const DeviceConfig& device, const ChainConfig& chain,
                        const Table1Config& config);

Json table1_report_to_json(const Table1Report& report);

/// Plain-text table for the console.
std::string table1_report_to_text(const Table1Report& report);

}  // namespace ratefit
