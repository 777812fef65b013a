// ratefit: forward models, fits, and the cross-method rate report for a
// driven two-level emitter at the end of a 1D waveguide.
//
// Exit codes: 0 ok, 2 config/CSV schema violation, 3 physics validity error,
// 4 fit non-convergence (partial result still written), 5 table1 row failure.

#include <CLI11.hpp>
#include <iostream>

#include "ratefit/dynamics.hpp"
#include "ratefit/estimators.hpp"
#include "ratefit/io.hpp"
#include "ratefit/pipeline.hpp"
#include "ratefit/qed.hpp"
#include "ratefit/units.hpp"

namespace {

using namespace ratefit;

constexpr int kExitSchema = 2;
constexpr int kExitPhysics = 3;
constexpr int kExitNoConvergence = 4;
constexpr int kExitRowFailed = 5;

struct CommonArgs {
    std::string config_path;
    std::string out_path;
    std::string data_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool quiet = false;
};

RunConfig load_config(const CommonArgs& args) {
    RunConfig config = load_run_config(args.config_path);
    if (args.seed_set) config.chain.seed = args.seed;
    return config;
}

const DeviceConfig& require_device(const RunConfig& config) {
    if (!config.device) throw SchemaError("config: missing 'device' block");
    return *config.device;
}

int run_simulate(const std::string& kind, const CommonArgs& args) {
    const RunConfig config = load_config(args);
    const DeviceConfig& device = require_device(config);

    if (kind == "reflection") {
        if (!config.reflection) throw SchemaError("config: missing 'reflection' block");
        const ReflectionData data =
            simulate_reflection(device, *config.reflection, config.chain);
        write_reflection_csv(args.out_path, data);
    } else if (kind == "spectrum") {
        if (!config.spectrum) throw SchemaError("config: missing 'spectrum' block");
        const Spectrum spec = simulate_spectrum(device, *config.spectrum, config.chain);
        write_spectrum_csv(args.out_path, spec, device.f01_hz);
    } else if (kind == "powers") {
        if (!config.powers) throw SchemaError("config: missing 'powers' block");
        const PowersData data = simulate_powers(device, *config.powers, config.chain);
        write_powers_csv(args.out_path, data);
    } else if (kind == "dynamics") {
        if (!config.dynamics) throw SchemaError("config: missing 'dynamics' block");
        const DynamicsEnsemble ens =
            simulate_dynamics(device, *config.dynamics, config.chain);
        write_trace_csv(args.out_path,
                        config.dynamics->average ? ens.average : ens.traces.front());
    } else {
        throw SchemaError("unknown simulate kind '" + kind + "'");
    }
    write_sidecar(args.out_path, config);
    if (!args.quiet) std::cout << "wrote " << args.out_path << "\n";
    return 0;
}

Uncertain angular_ref(const Uncertain& hz) {
    return Uncertain{hz_to_rad(hz.value), hz_to_rad(hz.sigma)};
}

int finish_fit(const FitResult& fit, const std::string& kind,
               const CommonArgs& args, Json derived = {}) {
    Json j = fit_result_to_json(fit, kind);
    if (!derived.empty()) j["derived"] = derived;
    write_text_file(args.out_path, j.dump(2) + "\n");
    if (!args.quiet) {
        std::cout << "wrote " << args.out_path
                  << (fit.converged ? "" : " (NOT converged)") << "\n";
    }
    return fit.converged ? 0 : kExitNoConvergence;
}

Json uncertain_hz_json(const Uncertain& u) {
    return Json{{"value_hz", rad_to_hz(u.value)}, {"sigma_hz", rad_to_hz(u.sigma)}};
}

int run_fit(const std::string& kind, const CommonArgs& args) {
    const RunConfig config = load_config(args);
    const FitTask fit_cfg = config.fit.value_or(FitTask{});

    if (kind == "reflection") {
        const ReflectionData data = read_reflection_csv(args.data_path);
        std::vector<double> w(data.freq_hz.size());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = hz_to_rad(data.freq_hz[i]);
        const CircleFit fit = circle_fit(w, data.r, data.sigma);
        Json derived{{"radius", fit.radius},
                     {"center_re", fit.center_re},
                     {"center_im", fit.center_im},
                     {"algebraic_rms", fit.algebraic_rms}};
        return finish_fit(fit.fit, kind, args, derived);
    }
    if (kind == "triplet") {
        double f01 = fit_cfg.f01_hz.value_or(
            config.device ? config.device->f01_hz : 0.0);
        if (!(f01 > 0.0))
            throw SchemaError("config: fit.f01_hz (or device.f01_hz) required for triplet");
        const Spectrum spec = read_spectrum_csv(args.data_path, f01);
        TripletOptions opt;
        opt.joint = fit_cfg.joint;
        const TripletFit fit = fit_mollow_triplet(spec, opt);
        Json derived{{"gamma_1", uncertain_hz_json(fit.gamma_1)},
                     {"gamma_2", uncertain_hz_json(fit.gamma_2)},
                     {"rabi", uncertain_hz_json(fit.rabi)},
                     {"area_red", fit.area_red.value},
                     {"area_center", fit.area_center.value},
                     {"area_blue", fit.area_blue.value}};
        if (fit_cfg.gamma_r_ref_hz) {
            PartialRates partial;
            partial.gamma_1 = fit.gamma_1;
            partial.gamma_2 = fit.gamma_2;
            const CombinedRates c =
                combine_rates(partial, angular_ref(*fit_cfg.gamma_r_ref_hz));
            derived["gamma_n"] = uncertain_hz_json(c.gamma_n);
            derived["gamma_phi"] = uncertain_hz_json(c.gamma_phi);
        }
        return finish_fit(fit.fit, kind, args, derived);
    }
    if (kind == "spectrum") {
        double f01 = fit_cfg.f01_hz.value_or(
            config.device ? config.device->f01_hz : 0.0);
        if (!(f01 > 0.0))
            throw SchemaError("config: fit.f01_hz (or device.f01_hz) required for spectrum");
        if (!fit_cfg.gamma_r_ref_hz)
            throw SchemaError("config: fit.gamma_r_ref_hz required for spectrum");
        const Spectrum spec = read_spectrum_csv(args.data_path, f01);
        SpectrumFitOptions opt;
        opt.free_amplitude = fit_cfg.free_amplitude;
        if (fit_cfg.max_iter) opt.max_iter = *fit_cfg.max_iter;
        if (fit_cfg.init_gamma_1_hz) opt.init_gamma_1 = hz_to_rad(*fit_cfg.init_gamma_1_hz);
        if (fit_cfg.init_gamma_phi_hz)
            opt.init_gamma_phi = hz_to_rad(*fit_cfg.init_gamma_phi_hz);
        if (fit_cfg.init_rabi_hz) opt.init_rabi = hz_to_rad(*fit_cfg.init_rabi_hz);
        if (fit_cfg.init_delta_hz) opt.init_delta = hz_to_rad(*fit_cfg.init_delta_hz);
        const SpectrumFit fit = fit_full_spectrum(
            spec, hz_to_rad(f01), angular_ref(*fit_cfg.gamma_r_ref_hz), opt);
        Json derived{{"gamma_2", uncertain_hz_json(fit.gamma_2)},
                     {"gamma_n", uncertain_hz_json(fit.gamma_n)}};
        return finish_fit(fit.fit, kind, args, derived);
    }
    if (kind == "powers") {
        const PowersData data = read_powers_csv(args.data_path);
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
        curves.calib_sigma_rel = fit_cfg.calib_sigma_rel;
        const ScatteringFit fit = fit_scattering_powers(curves);
        Json derived{
            {"combined",
             Json{{"gamma_r", uncertain_hz_json({fit.combined.gamma_r,
                                                 fit.combined.gamma_r_sigma})},
                  {"gamma_n", uncertain_hz_json({fit.combined.gamma_n,
                                                 fit.combined.gamma_n_sigma})},
                  {"gamma_phi", uncertain_hz_json({fit.combined.gamma_phi,
                                                   fit.combined.gamma_phi_sigma})}}},
            {"loss_fit", fit_result_to_json(fit.loss, "powers-loss")},
            {"coh_fit", fit_result_to_json(fit.coh, "powers-coh")},
            {"cross_warnings", fit.warnings}};
        return finish_fit(fit.incoh, kind, args, derived);
    }
    if (kind == "single-point") {
        const PowersData data = read_powers_csv(args.data_path);
        if (!data.has_sigma())
            throw SchemaError("single-point fit expects noisy powers data with sigma");
        // The saturated point: highest Rabi amplitude row.
        std::size_t i_max = 0;
        for (std::size_t i = 1; i < data.rabi_hz.size(); ++i)
            if (data.rabi_hz[i] > data.rabi_hz[i_max]) i_max = i;
        std::optional<Uncertain> ref;
        if (fit_cfg.gamma_r_ref_hz) ref = angular_ref(*fit_cfg.gamma_r_ref_hz);
        const SinglePointRates sp = single_point_rates(
            Uncertain{data.p_loss[i_max], data.sigma_loss[i_max]},
            Uncertain{data.p_incoh[i_max], data.sigma_incoh[i_max]},
            hz_to_rad(data.rabi_hz[i_max]), ref);
        FitResult fit;
        fit.names = {"gamma_r", "gamma_n", "gamma_1"};
        fit.params = Eigen::VectorXd(3);
        fit.params << sp.gamma_r.value, sp.gamma_n.value, sp.gamma_1.value;
        fit.covariance = Eigen::MatrixXd::Zero(3, 3);
        fit.covariance(0, 0) = sp.gamma_r.sigma * sp.gamma_r.sigma;
        fit.covariance(1, 1) = sp.gamma_n.sigma * sp.gamma_n.sigma;
        fit.covariance(2, 2) = sp.gamma_1.sigma * sp.gamma_1.sigma;
        fit.converged = true;
        fit.n_iter = sp.iterations;
        fit.n_points = 1;
        Json derived{{"correction", sp.correction}};
        return finish_fit(fit, kind, args, derived);
    }
    if (kind == "dynamics") {
        const ComplexTrace trace = read_trace_csv(args.data_path);
        const FitResult fit = trace.role == TraceRole::Amplitude
                                  ? fit_complex_decay(trace)
                                  : fit_exponential_power(trace);
        Json derived;
        if (fit_cfg.gamma_r_ref_hz && trace.role == TraceRole::Power) {
            PartialRates partial;
            partial.gamma_1 = fit.get("gamma_1");
            if (fit_cfg.gamma_2_ref_hz)
                partial.gamma_2 = angular_ref(*fit_cfg.gamma_2_ref_hz);
            if (partial.gamma_2) {
                const CombinedRates c =
                    combine_rates(partial, angular_ref(*fit_cfg.gamma_r_ref_hz));
                derived["gamma_n"] = uncertain_hz_json(c.gamma_n);
                derived["gamma_phi"] = uncertain_hz_json(c.gamma_phi);
            }
        }
        return finish_fit(fit, kind, args, derived);
    }
    throw SchemaError("unknown fit kind '" + kind + "'");
}

int run_table1(const CommonArgs& args) {
    const RunConfig config = load_config(args);
    const DeviceConfig& device = require_device(config);
    if (!config.table1) throw SchemaError("config: missing 'table1' block");

    const Table1Report report = run_table1(device, config.chain, *config.table1);
    Json j = table1_report_to_json(report);
    j["seed"] = config.chain.seed;
    j["resolved_config"] = run_config_to_json(config);
    write_text_file(args.out_path, j.dump(2) + "\n");
    if (!args.quiet) std::cout << table1_report_to_text(report);

    for (const MethodRow& row : report.rows)
        if (!row.ok) return kExitRowFailed;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"waveguide-QED decoherence-rate toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string sim_kind, fit_kind;

    auto add_common = [&](CLI::App* cmd, bool needs_data) {
        cmd->add_option("--config", args.config_path, "JSON run config")->required();
        cmd->add_option("--out", args.out_path, "output path")->required();
        if (needs_data)
            cmd->add_option("--data", args.data_path, "input CSV data")->required();
        cmd->add_option("--seed", args.seed, "override chain seed")
            ->each([&](const std::string&) { args.seed_set = true; });
        cmd->add_flag("--quiet", args.quiet, "suppress console output");
    };

    CLI::App* sim = app.add_subcommand("simulate", "synthesize measurement data");
    sim->add_option("kind", sim_kind, "reflection|spectrum|powers|dynamics")
        ->required();
    add_common(sim, false);

    CLI::App* fit = app.add_subcommand("fit", "fit a dataset");
    fit->add_option("kind", fit_kind,
                    "reflection|triplet|spectrum|powers|single-point|dynamics")
        ->required();
    add_common(fit, true);

    CLI::App* t1 = app.add_subcommand("table1", "six-method cross-validation report");
    add_common(t1, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return run_simulate(sim_kind, args);
        if (fit->parsed()) return run_fit(fit_kind, args);
        return run_table1(args);
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return kExitSchema;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPhysics;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPhysics;
    }
}
