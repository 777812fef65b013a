#include "ratefit/pipeline.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "ratefit/dynamics.hpp"
#include "ratefit/parallel.hpp"
#include "ratefit/qed.hpp"
#include "ratefit/rng.hpp"
#include "ratefit/units.hpp"

namespace ratefit {

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i)
        out[i] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
    return out;
}

double resolve_rabi(const DeviceConfig& device, const SpectrumTask& task,
                    const ChainConfig& chain) {
    if (task.rabi_hz) return hz_to_rad(*task.rabi_hz);
    if (task.power_dbm)
        return rabi_from_power(*task.power_dbm, chain.attenuation_db,
                               device.rates().gamma_r, device.f01_hz);
    throw InvalidInput("spectrum task: needs rabi_hz or power_dbm");
}

ChainConfig chain_with(const ChainConfig& base, std::optional<double> n_avg,
                       std::uint64_t salt) {
    ChainConfig c = base;
    if (n_avg) c.n_avg = *n_avg;
    c.seed = RandomStream(base.seed).fork(salt).next_u64();
    return c;
}

}  // namespace

ReflectionData simulate_reflection(const DeviceConfig& device,
                                   const ReflectionTask& task,
                                   const ChainConfig& chain) {
    if (task.n_points < 2) throw InvalidInput("reflection task: n_points < 2");
    const RateSet rates = device.rates();
    const double w01 = hz_to_rad(device.f01_hz);
    const double span = hz_to_rad(task.span_hz);

    ReflectionData data;
    data.freq_hz.resize(task.n_points);
    data.r.resize(task.n_points);
    for (int i = 0; i < task.n_points; ++i) {
        const double w = w01 - 0.5 * span +
                         span * static_cast<double>(i) / (task.n_points - 1);
        DriveConfig drive;
        drive.omega_q = w01;
        drive.omega_p = w;
        drive.rabi = 0.0;
        data.freq_hz[i] = rad_to_hz(w);
        data.r[i] = reflection_coefficient(drive, rates, ReflectionMode::WeakProbe);
    }
    if (!task.noiseless && task.sigma > 0.0) {
        data.r = synthesize_noisy_reflection(data.r, task.sigma, chain);
        data.sigma = task.sigma;
    }
    return data;
}

Spectrum simulate_spectrum(const DeviceConfig& device, const SpectrumTask& task,
                           const ChainConfig& chain) {
    if (task.n_points < 2) throw InvalidInput("spectrum task: n_points < 2");
    const RateSet rates = device.rates();
    const double w01 = hz_to_rad(device.f01_hz);
    DriveConfig drive;
    drive.omega_q = w01;
    drive.omega_p = w01 + hz_to_rad(task.delta_hz);
    drive.rabi = resolve_rabi(device, task, chain);

    // Grid centred on the pump, where the triplet lives.
    const double span = hz_to_rad(task.span_hz);
    std::vector<double> grid = linspace(drive.omega_p - 0.5 * span,
                                        drive.omega_p + 0.5 * span,
                                        task.n_points);
    Spectrum clean = incoherent_spectrum(grid, drive, rates);
    if (task.noiseless) return clean;
    return synthesize_noisy_psd(clean, chain_with(chain, task.n_avg, 0x5bec));
}

PowersData simulate_powers(const DeviceConfig& device, const PowersTask& task,
                           const ChainConfig& chain) {
    if (task.n_points < 1) throw InvalidInput("powers task: n_points < 1");
    if (task.log_spacing && !(task.rabi_min_hz > 0.0))
        throw InvalidInput("powers task: log spacing requires rabi_min_hz > 0");
    const RateSet rates = device.rates();

    PowersData data;
    data.rabi_hz.resize(task.n_points);
    for (int i = 0; i < task.n_points; ++i) {
        const double f = task.n_points == 1
                             ? 0.0
                             : static_cast<double>(i) / (task.n_points - 1);
        data.rabi_hz[i] = task.log_spacing
                              ? task.rabi_min_hz *
                                    std::pow(task.rabi_max_hz / task.rabi_min_hz, f)
                              : task.rabi_min_hz +
                                    (task.rabi_max_hz - task.rabi_min_hz) * f;
    }
    for (double f_hz : data.rabi_hz) {
        const PowerBudget p = power_balance(hz_to_rad(f_hz), rates);
        data.p_in.push_back(p.p_in);
        data.p_coh.push_back(p.p_coh);
        data.p_incoh.push_back(p.p_incoh);
        data.p_loss.push_back(p.p_loss);
    }
    if (task.noiseless) return data;

    const ChainConfig c = chain_with(chain, task.n_avg, 0x9a11);
    const double floor = c.noise_photons * task.bw_hz;
    const double inv_sqrt_n = 1.0 / std::sqrt(c.n_avg);
    RandomStream root(c.seed);

    // Miscalibration of the absolute power scale: one draw for the dataset.
    if (task.calib_sigma_rel > 0.0) {
        RandomStream cal = root.fork(4);
        const double scale = 1.0 + task.calib_sigma_rel * cal.normal();
        for (auto* col : {&data.p_in, &data.p_coh, &data.p_incoh, &data.p_loss})
            for (double& v : *col) v *= scale;
    }

    auto add_noise = [&](std::vector<double>& values, std::vector<double>& sigmas,
                         std::uint64_t column) {
        sigmas.resize(values.size());
        RandomStream col = root.fork(column);
        for (std::size_t i = 0; i < values.size(); ++i) {
            RandomStream point = col.fork(i);
            sigmas[i] = (std::abs(values[i]) + floor) * inv_sqrt_n;
            values[i] += sigmas[i] * point.normal();
        }
    };
    add_noise(data.p_in, data.sigma_in, 0);
    add_noise(data.p_coh, data.sigma_coh, 1);
    add_noise(data.p_incoh, data.sigma_incoh, 2);
    add_noise(data.p_loss, data.sigma_loss, 3);
    return data;
}

DynamicsEnsemble simulate_dynamics(const DeviceConfig& device,
                                   const DynamicsTask& task,
                                   const ChainConfig& chain) {
    if (task.n_samples < 4) throw InvalidInput("dynamics task: n_samples < 4");
    if (task.n_traces < 1) throw InvalidInput("dynamics task: n_traces < 1");
    const RateSet base = device.rates();
    const std::vector<double> grid = linspace(0.0, task.t_max_s, task.n_samples);

    DriftEnsembleSpec spec;
    spec.n_traces = static_cast<std::size_t>(task.n_traces);
    const std::vector<DriftDraw> draws = drift_ensemble(
        base, hz_to_rad(task.freq_jitter_hz), hz_to_rad(task.rate_jitter_hz),
        spec, RandomStream(chain.seed).fork(0xd81f).next_u64());

    const bool ramsey = task.protocol == "ramsey";
    PulseConfig pulse;
    pulse.instantaneous = task.pulse_duration_s <= 0.0;
    pulse.duration_s = task.pulse_duration_s;

    DynamicsEnsemble out;
    out.traces.resize(draws.size());
    parallel_for(draws.size(), [&](std::size_t i) {
        const DriftDraw& d = draws[i];
        ComplexTrace clean;
        if (ramsey) {
            // Detected amplitude in sqrt(flux) units: sqrt(Gamma_r) <sigma_->.
            const BlochVector prep = pulse_prepare(M_PI / 2.0, pulse, d.rates);
            const double scale = std::abs(prep.s1) * std::sqrt(d.rates.gamma_r);
            clean = ramsey_emission(hz_to_rad(task.delta_pulse_hz) + d.delta_omega01,
                                    d.rates, grid, scale);
        } else {
            const BlochVector prep = pulse_prepare(M_PI, pulse, d.rates);
            clean = t1_power_trace(d.rates, grid, prep.sz());
        }
        if (task.noiseless) {
            out.traces[i] = std::move(clean);
        } else {
            ChainConfig c = chain;
            if (task.n_avg) c.n_avg = *task.n_avg;
            c.seed = RandomStream(chain.seed).fork(0x7ace).fork(i).next_u64();
            out.traces[i] = synthesize_noisy_trace(clean, c);
        }
    });

    // Average in fixed index order (thread-count independent).
    out.average = out.traces.front();
    if (out.traces.size() > 1) {
        for (std::size_t i = 1; i < out.traces.size(); ++i)
            for (std::size_t k = 0; k < out.average.size(); ++k)
                out.average.values[k] += out.traces[i].values[k];
        const double inv = 1.0 / static_cast<double>(out.traces.size());
        for (std::size_t k = 0; k < out.average.size(); ++k)
            out.average.values[k] *= inv;
        if (out.average.has_sigma()) {
            const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(out.traces.size()));
            for (double& s : out.average.sigma) s *= inv_sqrt;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// cross-method pipeline

namespace {

Uncertain to_hz(Uncertain u) {
    return Uncertain{rad_to_hz(u.value), rad_to_hz(u.sigma)};
}

MethodRow fail_row(const std::string& method, const std::string& error) {
    MethodRow row;
    row.method = method;
    row.error = error;
    return row;
}

void fill_from_combined(MethodRow& row, const CombinedRates& c, bool with_gr) {
    if (with_gr) row.gamma_r = c.gamma_r;
    row.gamma_n = c.gamma_n;
    row.gamma_phi = c.gamma_phi;
    row.gamma_1 = c.gamma_1;
    row.gamma_2 = c.gamma_2;
    row.warnings = c.warnings;
}

}  // namespace

Table1Report run_table1(const DeviceConfig& device, const ChainConfig& chain,
                        const Table1Config& config) {
    Table1Report report;
    report.ground_truth = device.rates();

    // Row 1: reflection; it provides the gamma_r baseline for later rows.
    Uncertain gamma_r_ref{device.rates().gamma_r, 0.0};
    Uncertain gamma_2_ref{device.rates().gamma_2(), 0.0};
    {
        MethodRow row;
        row.method = "Reflection";
        try {
            ChainConfig c = chain;
            c.seed = RandomStream(chain.seed).fork(1).next_u64();
            const ReflectionData data =
                simulate_reflection(device, config.reflection, c);
            std::vector<double> w(data.freq_hz.size());
            for (std::size_t i = 0; i < w.size(); ++i)
                w[i] = hz_to_rad(data.freq_hz[i]);
            const CircleFit fit = circle_fit(w, data.r, data.sigma);
            row.gamma_r = fit.fit.get("gamma_r");
            row.gamma_2 = fit.fit.get("gamma_2");
            row.ok = fit.fit.converged;
            if (!row.ok) row.error = "fit did not converge";
            gamma_r_ref = *row.gamma_r;
            gamma_2_ref = *row.gamma_2;
        } catch (const Error& e) {
            row = fail_row("Reflection", e.what());
        }
        report.rows.push_back(row);
    }

    // Row 2: on-resonant Mollow triplet.
    {
        MethodRow row;
        row.method = "On-res.MT";
        try {
            ChainConfig c = chain;
            c.seed = RandomStream(chain.seed).fork(2).next_u64();
            const Spectrum spec = simulate_spectrum(device, config.onres, c);
            const TripletFit fit = fit_mollow_triplet(spec);
            PartialRates partial;
            partial.gamma_1 = fit.gamma_1;
            partial.gamma_2 = fit.gamma_2;
            const CombinedRates combined = combine_rates(partial, gamma_r_ref);
            fill_from_combined(row, combined, false);
            row.ok = fit.fit.converged;
            if (!row.ok) row.error = "fit did not converge";
        } catch (const Error& e) {
            row = fail_row("On-res.MT", e.what());
        }
        report.rows.push_back(row);
    }

    // Row 3: off-resonant full line-shape fit.
    {
        MethodRow row;
        row.method = "Off-res.MT";
        try {
            ChainConfig c = chain;
            c.seed = RandomStream(chain.seed).fork(3).next_u64();
            const Spectrum spec = simulate_spectrum(device, config.offres, c);
            const double w01 = hz_to_rad(device.f01_hz);
            // Drive settings are experimenter knowledge: seed the fit with
            // the configured detuning and calibrated Rabi amplitude.
            SpectrumFitOptions opt;
            opt.free_amplitude = true;  // detected PSD is gain-referred
            opt.init_delta = hz_to_rad(config.offres.delta_hz);
            if (config.offres.rabi_hz)
                opt.init_rabi = hz_to_rad(*config.offres.rabi_hz);
            else if (config.offres.power_dbm)
                opt.init_rabi = rabi_from_power(*config.offres.power_dbm,
                                                chain.attenuation_db,
                                                device.rates().gamma_r,
                                                device.f01_hz);
            const SpectrumFit fit = fit_full_spectrum(spec, w01, gamma_r_ref, opt);
            PartialRates partial;
            partial.gamma_1 = fit.gamma_1;
            partial.gamma_phi = fit.gamma_phi;
            partial.gamma_2 = fit.gamma_2;
            const CombinedRates combined = combine_rates(partial, gamma_r_ref);
            fill_from_combined(row, combined, false);
            row.ok = fit.fit.converged;
            if (!row.ok) row.error = "fit did not converge";
        } catch (const Error& e) {
            row = fail_row("Off-res.MT", e.what());
        }
        report.rows.push_back(row);
    }

    // Row 4: power scattering (measures everything by itself).
    {
        MethodRow row;
        row.method = "Scattering";
        try {
            ChainConfig c = chain;
            c.seed = RandomStream(chain.seed).fork(4).next_u64();
            const PowersData data = simulate_powers(device, config.scattering, c);
            PowerCurves curves;
            curves.rabi.resize(data.rabi_hz.size());
            for (std::size_t i = 0; i < curves.rabi.size(); ++i)
                curves.rabi[i] = hz_to_rad(data.rabi_hz[i]);
            curves.p_coh = data.p_coh;
            curves.p_incoh = data.p_incoh;
            curves.p_loss = data.p_loss;
            curves.sigma_coh = data.sigma_coh;
            curves.sigma_incoh = data.sigma_incoh;
            curves.sigma_loss = data.sigma_loss;
            curves.calib_sigma_rel = config.scattering.calib_sigma_rel;
            const ScatteringFit fit = fit_scattering_powers(curves);
            PartialRates partial;
            partial.gamma_r = Uncertain{fit.combined.gamma_r, fit.combined.gamma_r_sigma};
            partial.gamma_n = Uncertain{fit.combined.gamma_n, fit.combined.gamma_n_sigma};
            partial.gamma_phi =
                Uncertain{fit.combined.gamma_phi, fit.combined.gamma_phi_sigma};
            const CombinedRates combined = combine_rates(partial, gamma_r_ref);
            fill_from_combined(row, combined, true);
            row.warnings.insert(row.warnings.end(), fit.warnings.begin(),
                                fit.warnings.end());
            row.ok = fit.incoh.converged && fit.loss.converged && fit.coh.converged;
            if (!row.ok) row.error = "fit did not converge";
        } catch (const Error& e) {
            row = fail_row("Scattering", e.what());
        }
        report.rows.push_back(row);
    }

    // Row 5: single saturated point plus the reflection references.
    {
        MethodRow row;
        row.method = "SinglePoint";
        try {
            PowersTask single;
            single.rabi_min_hz = config.singlepoint.rabi_hz;
            single.rabi_max_hz = config.singlepoint.rabi_hz;
            single.n_points = 1;
            single.log_spacing = false;
            single.bw_hz = config.singlepoint.bw_hz;
            single.n_avg = config.singlepoint.n_avg;
            ChainConfig c = chain;
            c.seed = RandomStream(chain.seed).fork(5).next_u64();
            const PowersData data = simulate_powers(device, single, c);
            const SinglePointRates sp = single_point_rates(
                Uncertain{data.p_loss[0], data.sigma_loss[0]},
                Uncertain{data.p_incoh[0], data.sigma_incoh[0]},
                hz_to_rad(data.rabi_hz[0]));
            PartialRates partial;
            partial.gamma_n = sp.gamma_n;
            partial.gamma_2 = gamma_2_ref;
            const CombinedRates combined = combine_rates(partial, gamma_r_ref);
            fill_from_combined(row, combined, false);
            row.ok = true;
        } catch (const Error& e) {
            row = fail_row("SinglePoint", e.what());
        }
        report.rows.push_back(row);
    }

    // Row 6: time-resolved dynamics (ramsey ensemble + pi-pulse power decay).
    {
        MethodRow row;
        row.method = "Dynamics";
        try {
            ChainConfig c = chain;
            c.seed = RandomStream(chain.seed).fork(6).next_u64();
            DynamicsTask ramsey = config.dynamics;
            ramsey.protocol = "ramsey";
            const DynamicsEnsemble ens = simulate_dynamics(device, ramsey, c);

            // Per-trace fits feed the stability histograms.
            std::vector<double> g2_values(ens.traces.size());
            std::vector<double> g2_errors(ens.traces.size());
            std::vector<double> dw_values(ens.traces.size());
            parallel_for(ens.traces.size(), [&](std::size_t i) {
                const FitResult f = fit_complex_decay(ens.traces[i]);
                g2_values[i] = f.value("gamma_2");
                g2_errors[i] = f.sigma("gamma_2");
                dw_values[i] = f.value("delta_omega");
            });
            if (ens.traces.size() >= 30) {
                const HistogramFit hg2 = fit_gaussian_histogram(g2_values);
                report.gamma2_hist_mean = hg2.fit.value("mean");
                report.gamma2_hist_sigma = hg2.fit.value("sigma");
                const HistogramFit hdw = fit_gaussian_histogram(dw_values);
                report.delta_omega_hist_mean = hdw.fit.value("mean");
                report.delta_omega_hist_sigma = hdw.fit.value("sigma");
                std::vector<double> errs = g2_errors;
                std::nth_element(errs.begin(), errs.begin() + errs.size() / 2,
                                 errs.end());
                report.gamma2_trace_error = errs[errs.size() / 2];
            }

            FitResult avg_fit = fit_complex_decay(ens.average);
            // Drift makes the per-trace scatter exceed the statistical error;
            // fold the standard error of that scatter into the averaged
            // gamma_2 so the quoted uncertainty covers the campaign, not just
            // the trace noise.
            if (ens.traces.size() >= 30 && report.gamma2_hist_sigma > 0.0) {
                const int ig2 = avg_fit.index("gamma_2");
                const double sem = report.gamma2_hist_sigma /
                                   std::sqrt(static_cast<double>(ens.traces.size()));
                avg_fit.covariance(ig2, ig2) += sem * sem;
            }

            DynamicsTask t1 = config.dynamics;
            t1.protocol = "t1";
            t1.n_traces = 1;
            t1.freq_jitter_hz = 0.0;
            t1.rate_jitter_hz = 0.0;
            if (t1.t1_n_avg) t1.n_avg = t1.t1_n_avg;
            ChainConfig c1 = chain;
            c1.seed = RandomStream(chain.seed).fork(7).next_u64();
            const DynamicsEnsemble pow_ens = simulate_dynamics(device, t1, c1);
            const FitResult pow_fit = fit_exponential_power(pow_ens.average);

            PartialRates partial;
            partial.gamma_2 = avg_fit.get("gamma_2");
            partial.gamma_1 = pow_fit.get("gamma_1");
            const CombinedRates combined = combine_rates(partial, gamma_r_ref);
            fill_from_combined(row, combined, false);
            row.ok = avg_fit.converged && pow_fit.converged;
            if (!row.ok) row.error = "fit did not converge";
        } catch (const Error& e) {
            row = fail_row("Dynamics", e.what());
        }
        report.rows.push_back(row);
    }

    // Pairwise 2-sigma consistency across methods, per rate.
    report.all_consistent_2sigma = true;
    double worst = 0.0;
    const auto fields = {&MethodRow::gamma_r, &MethodRow::gamma_n,
                         &MethodRow::gamma_phi, &MethodRow::gamma_1,
                         &MethodRow::gamma_2};
    const char* field_names[] = {"gamma_r", "gamma_n", "gamma_phi", "gamma_1",
                                 "gamma_2"};
    int fi = 0;
    for (auto field : fields) {
        for (std::size_t a = 0; a < report.rows.size(); ++a) {
            for (std::size_t b = a + 1; b < report.rows.size(); ++b) {
                const auto& ua = report.rows[a].*field;
                const auto& ub = report.rows[b].*field;
                if (!report.rows[a].ok || !report.rows[b].ok) continue;
                if (!ua || !ub) continue;
                const double comb = std::hypot(ua->sigma, ub->sigma);
                if (comb <= 0.0) continue;
                const double n_sigma = std::abs(ua->value - ub->value) / comb;
                if (n_sigma > worst) {
                    worst = n_sigma;
                    std::ostringstream name;
                    name << field_names[fi] << ": " << report.rows[a].method
                         << " vs " << report.rows[b].method;
                    report.worst_pair = name.str();
                    report.worst_pair_sigma = n_sigma;
                }
                if (n_sigma > 2.0) report.all_consistent_2sigma = false;
            }
        }
        ++fi;
    }
    return report;
}

Json table1_report_to_json(const Table1Report& report) {
    Json j;
    j["schema_version"] = 1;
    j["ground_truth"] = Json{
        {"gamma_r_hz", rad_to_hz(report.ground_truth.gamma_r)},
        {"gamma_n_hz", rad_to_hz(report.ground_truth.gamma_n)},
        {"gamma_phi_hz", rad_to_hz(report.ground_truth.gamma_phi)},
        {"gamma_1_hz", rad_to_hz(report.ground_truth.gamma_1())},
        {"gamma_2_hz", rad_to_hz(report.ground_truth.gamma_2())}};
    Json rows = Json::array();
    for (const MethodRow& row : report.rows) {
        Json r;
        r["method"] = row.method;
        r["status"] = row.ok ? "ok" : "failed";
        if (!row.ok) r["error"] = row.error;
        auto put = [&](const char* name, const std::optional<Uncertain>& u) {
            if (!u) {
                r[name] = nullptr;
                return;
            }
            const Uncertain hz = to_hz(*u);
            r[name] = Json{{"value_hz", hz.value}, {"sigma_hz", hz.sigma}};
        };
        put("gamma_r", row.gamma_r);
        put("gamma_n", row.gamma_n);
        put("gamma_phi", row.gamma_phi);
        put("gamma_1", row.gamma_1);
        put("gamma_2", row.gamma_2);
        r["warnings"] = row.warnings;
        rows.push_back(r);
    }
    j["rows"] = rows;
    j["consistency"] = Json{{"all_within_2sigma", report.all_consistent_2sigma},
                            {"worst_pair", report.worst_pair},
                            {"worst_pair_sigma", report.worst_pair_sigma}};
    j["dynamics_stability"] = Json{
        {"gamma2_hist_mean_hz", rad_to_hz(report.gamma2_hist_mean)},
        {"gamma2_hist_sigma_hz", rad_to_hz(report.gamma2_hist_sigma)},
        {"gamma2_trace_error_hz", rad_to_hz(report.gamma2_trace_error)},
        {"delta_omega_hist_mean_hz", rad_to_hz(report.delta_omega_hist_mean)},
        {"delta_omega_hist_sigma_hz", rad_to_hz(report.delta_omega_hist_sigma)}};
    return j;
}

std::string table1_report_to_text(const Table1Report& report) {
    std::ostringstream out;
    out << std::left << std::setw(12) << "Method";
    for (const char* h : {"Gr/2pi kHz", "Gn/2pi kHz", "Gphi/2pi kHz",
                          "G1/2pi kHz", "G2/2pi kHz"})
        out << std::setw(16) << h;
    out << '\n';
    auto cell = [](const std::optional<Uncertain>& u) {
        if (!u) return std::string("-");
        std::ostringstream s;
        s << std::fixed << std::setprecision(1) << rad_to_hz(u->value) / 1e3 << " ("
          << std::setprecision(1) << rad_to_hz(u->sigma) / 1e3 << ")";
        return s.str();
    };
    for (const MethodRow& row : report.rows) {
        out << std::left << std::setw(12) << row.method;
        if (!row.ok) {
            out << "FAILED: " << row.error << '\n';
            continue;
        }
        out << std::setw(16) << cell(row.gamma_r) << std::setw(16)
            << cell(row.gamma_n) << std::setw(16) << cell(row.gamma_phi)
            << std::setw(16) << cell(row.gamma_1) << std::setw(16)
            << cell(row.gamma_2) << '\n';
    }
    out << (report.all_consistent_2sigma
                ? "all methods consistent within 2 sigma"
                : "INCONSISTENT beyond 2 sigma: " + report.worst_pair);
    out << '\n';
    return out.str();
}

}  // namespace ratefit
