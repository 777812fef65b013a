#include "ratefit/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ratefit/units.hpp"

namespace ratefit {

namespace {

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r' && c != ' ') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open '" + path + "'");
    CsvTable t;
    std::string line;
    if (!std::getline(in, line) || line.empty())
        throw SchemaError("'" + path + "': empty file or missing header");
    t.header = split_csv_line(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != t.header.size()) {
            std::ostringstream msg;
            msg << "'" << path << "' line " << lineno << ": expected "
                << t.header.size() << " columns, got " << cells.size();
            throw SchemaError(msg.str());
        }
        std::vector<double> row(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            char* end = nullptr;
            row[i] = std::strtod(cells[i].c_str(), &end);
            if (end == cells[i].c_str() || *end != '\0') {
                std::ostringstream msg;
                msg << "'" << path << "' line " << lineno << ": column '"
                    << t.header[i] << "' is not a number";
                throw SchemaError(msg.str());
            }
        }
        t.rows.push_back(std::move(row));
    }
    if (t.rows.empty())
        throw SchemaError("'" + path + "': no data rows");
    return t;
}

void require_header(const CsvTable& t, const std::vector<std::string>& expected,
                    const std::string& path) {
    if (t.header.size() != expected.size()) {
        std::ostringstream msg;
        msg << "'" << path << "': expected columns";
        for (const auto& c : expected) msg << " " << c;
        throw SchemaError(msg.str());
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (t.header[i] != expected[i])
            throw SchemaError("'" + path + "': column " + std::to_string(i + 1) +
                              " is '" + t.header[i] + "', expected '" +
                              expected[i] + "'");
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// CSV formats

void write_reflection_csv(const std::string& path, const ReflectionData& data) {
    std::ofstream out = open_out(path);
    const bool noisy = data.sigma > 0.0;
    out << (noisy ? "freq_hz,re_r,im_r,sigma_re,sigma_im\n"
                  : "freq_hz,re_r,im_r\n");
    for (std::size_t i = 0; i < data.freq_hz.size(); ++i) {
        out << fmt17(data.freq_hz[i]) << ',' << fmt17(data.r[i].real()) << ','
            << fmt17(data.r[i].imag());
        if (noisy) out << ',' << fmt17(data.sigma) << ',' << fmt17(data.sigma);
        out << '\n';
    }
}

ReflectionData read_reflection_csv(const std::string& path) {
    const CsvTable t = read_csv(path);
    ReflectionData d;
    if (t.header.size() == 5) {
        require_header(t, {"freq_hz", "re_r", "im_r", "sigma_re", "sigma_im"}, path);
        d.sigma = t.rows.front()[3];
    } else {
        require_header(t, {"freq_hz", "re_r", "im_r"}, path);
    }
    for (const auto& row : t.rows) {
        d.freq_hz.push_back(row[0]);
        d.r.emplace_back(row[1], row[2]);
    }
    return d;
}

void write_spectrum_csv(const std::string& path, const Spectrum& spectrum,
                        double f01_hz) {
    std::ofstream out = open_out(path);
    const bool noisy = spectrum.has_sigma();
    out << (noisy ? "detuning_hz,psd,sigma\n" : "detuning_hz,psd\n");
    const double w01 = hz_to_rad(f01_hz);
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        out << fmt17(rad_to_hz(spectrum.omega_grid[i] - w01)) << ','
            << fmt17(spectrum.psd[i] * kTwoPi);
        if (noisy) out << ',' << fmt17(spectrum.sigma[i] * kTwoPi);
        out << '\n';
    }
}

Spectrum read_spectrum_csv(const std::string& path, double f01_hz) {
    const CsvTable t = read_csv(path);
    const bool noisy = t.header.size() == 3;
    if (noisy)
        require_header(t, {"detuning_hz", "psd", "sigma"}, path);
    else
        require_header(t, {"detuning_hz", "psd"}, path);
    Spectrum s;
    const double w01 = hz_to_rad(f01_hz);
    for (const auto& row : t.rows) {
        s.omega_grid.push_back(w01 + hz_to_rad(row[0]));
        s.psd.push_back(row[1] / kTwoPi);
        if (noisy) s.sigma.push_back(row[2] / kTwoPi);
    }
    s.validate();
    return s;
}

void write_powers_csv(const std::string& path, const PowersData& data) {
    std::ofstream out = open_out(path);
    const bool noisy = data.has_sigma();
    out << "rabi_hz,p_in,p_coh,p_incoh,p_loss";
    if (noisy) out << ",sigma_in,sigma_coh,sigma_incoh,sigma_loss";
    out << '\n';
    for (std::size_t i = 0; i < data.rabi_hz.size(); ++i) {
        out << fmt17(data.rabi_hz[i]) << ',' << fmt17(data.p_in[i]) << ','
            << fmt17(data.p_coh[i]) << ',' << fmt17(data.p_incoh[i]) << ','
            << fmt17(data.p_loss[i]);
        if (noisy)
            out << ',' << fmt17(data.sigma_in[i]) << ',' << fmt17(data.sigma_coh[i])
                << ',' << fmt17(data.sigma_incoh[i]) << ','
                << fmt17(data.sigma_loss[i]);
        out << '\n';
    }
}

PowersData read_powers_csv(const std::string& path) {
    const CsvTable t = read_csv(path);
    const bool noisy = t.header.size() == 9;
    if (noisy)
        require_header(t,
                       {"rabi_hz", "p_in", "p_coh", "p_incoh", "p_loss",
                        "sigma_in", "sigma_coh", "sigma_incoh", "sigma_loss"},
                       path);
    else
        require_header(t, {"rabi_hz", "p_in", "p_coh", "p_incoh", "p_loss"}, path);
    PowersData d;
    for (const auto& row : t.rows) {
        d.rabi_hz.push_back(row[0]);
        d.p_in.push_back(row[1]);
        d.p_coh.push_back(row[2]);
        d.p_incoh.push_back(row[3]);
        d.p_loss.push_back(row[4]);
        if (noisy) {
            d.sigma_in.push_back(row[5]);
            d.sigma_coh.push_back(row[6]);
            d.sigma_incoh.push_back(row[7]);
            d.sigma_loss.push_back(row[8]);
        }
    }
    return d;
}

void write_trace_csv(const std::string& path, const ComplexTrace& trace) {
    std::ofstream out = open_out(path);
    const bool noisy = trace.has_sigma();
    if (trace.role == TraceRole::Amplitude)
        out << (noisy ? "t_s,re_v,im_v,sigma\n" : "t_s,re_v,im_v\n");
    else
        out << (noisy ? "t_s,power,sigma\n" : "t_s,power\n");
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out << fmt17(trace.t_grid[i]) << ',' << fmt17(trace.values[i].real());
        if (trace.role == TraceRole::Amplitude)
            out << ',' << fmt17(trace.values[i].imag());
        if (noisy) out << ',' << fmt17(trace.sigma[i]);
        out << '\n';
    }
}

ComplexTrace read_trace_csv(const std::string& path) {
    const CsvTable t = read_csv(path);
    ComplexTrace trace;
    if (t.header.size() >= 3 && t.header[1] == "re_v") {
        trace.role = TraceRole::Amplitude;
        if (t.header.size() == 4)
            require_header(t, {"t_s", "re_v", "im_v", "sigma"}, path);
        else
            require_header(t, {"t_s", "re_v", "im_v"}, path);
        for (const auto& row : t.rows) {
            trace.t_grid.push_back(row[0]);
            trace.values.emplace_back(row[1], row[2]);
            if (row.size() == 4) trace.sigma.push_back(row[3]);
        }
    } else {
        trace.role = TraceRole::Power;
        if (t.header.size() == 3)
            require_header(t, {"t_s", "power", "sigma"}, path);
        else
            require_header(t, {"t_s", "power"}, path);
        for (const auto& row : t.rows) {
            trace.t_grid.push_back(row[0]);
            trace.values.emplace_back(row[1], 0.0);
            if (row.size() == 3) trace.sigma.push_back(row[2]);
        }
    }
    trace.validate();
    return trace;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

class ObjectReader {
public:
    ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j.is_object())
            throw SchemaError("config: '" + path_ + "' must be an object");
    }

    ~ObjectReader() = default;

    double number(const char* key, std::optional<double> fallback = {}) {
        mark(key);
        if (!j_.contains(key)) {
            if (fallback) return *fallback;
            throw SchemaError("config: missing required field '" + field(key) + "'");
        }
        if (!j_.at(key).is_number())
            throw SchemaError("config: '" + field(key) + "' must be a number");
        return j_.at(key).get<double>();
    }

    std::optional<double> optional_number(const char* key) {
        mark(key);
        if (!j_.contains(key)) return std::nullopt;
        if (!j_.at(key).is_number())
            throw SchemaError("config: '" + field(key) + "' must be a number");
        return j_.at(key).get<double>();
    }

    bool boolean(const char* key, bool fallback) {
        mark(key);
        if (!j_.contains(key)) return fallback;
        if (!j_.at(key).is_boolean())
            throw SchemaError("config: '" + field(key) + "' must be a boolean");
        return j_.at(key).get<bool>();
    }

    std::string text(const char* key, const std::string& fallback) {
        mark(key);
        if (!j_.contains(key)) return fallback;
        if (!j_.at(key).is_string())
            throw SchemaError("config: '" + field(key) + "' must be a string");
        return j_.at(key).get<std::string>();
    }

    std::uint64_t integer(const char* key, std::uint64_t fallback) {
        mark(key);
        if (!j_.contains(key)) return fallback;
        if (!j_.at(key).is_number_integer() && !j_.at(key).is_number_unsigned())
            throw SchemaError("config: '" + field(key) + "' must be an integer");
        return j_.at(key).get<std::uint64_t>();
    }

    bool has_object(const char* key) {
        mark(key);
        return j_.contains(key);
    }

    const Json& object(const char* key) const { return j_.at(key); }

    /// Reject keys never requested by the reader.
    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            (void)value;
            if (seen_.end() == std::find(seen_.begin(), seen_.end(), key))
                throw SchemaError("config: unknown field '" + field(key.c_str()) + "'");
        }
    }

private:
    void mark(const char* key) {
        if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
            seen_.emplace_back(key);
    }
    std::string field(const char* key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    const Json& j_;
    std::string path_;
    std::vector<std::string> seen_;
};

DeviceConfig parse_device(const Json& j) {
    ObjectReader r(j, "device");
    DeviceConfig d;
    d.gamma_r_hz = r.number("gamma_r_hz");
    d.gamma_n_hz = r.number("gamma_n_hz", 0.0);
    d.gamma_phi_hz = r.number("gamma_phi_hz", 0.0);
    d.f01_hz = r.number("f01_hz");
    if (r.has_object("transmon")) {
        ObjectReader tr(r.object("transmon"), "device.transmon");
        TransmonParams t;
        t.ej_max_hz = tr.number("ej_max_hz");
        t.ec_hz = tr.number("ec_hz");
        t.flux = tr.number("flux", 0.0);
        tr.finish();
        d.transmon = t;
    }
    r.finish();
    return d;
}

ChainConfig parse_chain(const Json& j) {
    ObjectReader r(j, "chain");
    ChainConfig c;
    c.attenuation_db = r.number("attenuation_db", c.attenuation_db);
    c.gain_db = r.number("gain_db", c.gain_db);
    c.noise_photons = r.number("noise_photons", c.noise_photons);
    c.n_avg = r.number("n_avg", c.n_avg);
    c.rbw_hz = r.number("rbw_hz", c.rbw_hz);
    c.seed = r.integer("seed", c.seed);
    r.finish();
    return c;
}

ReflectionTask parse_reflection(const Json& j, const std::string& path) {
    ObjectReader r(j, path);
    ReflectionTask t;
    t.span_hz = r.number("span_hz", t.span_hz);
    t.n_points = static_cast<int>(r.integer("n_points", t.n_points));
    t.sigma = r.number("sigma", t.sigma);
    t.noiseless = r.boolean("noiseless", t.noiseless);
    r.finish();
    return t;
}

SpectrumTask parse_spectrum(const Json& j, const std::string& path) {
    ObjectReader r(j, path);
    SpectrumTask t;
    t.span_hz = r.number("span_hz", t.span_hz);
    t.n_points = static_cast<int>(r.integer("n_points", t.n_points));
    t.delta_hz = r.number("delta_hz", t.delta_hz);
    t.rabi_hz = r.optional_number("rabi_hz");
    t.power_dbm = r.optional_number("power_dbm");
    t.n_avg = r.optional_number("n_avg");
    t.noiseless = r.boolean("noiseless", t.noiseless);
    r.finish();
    return t;
}

PowersTask parse_powers(const Json& j, const std::string& path) {
    ObjectReader r(j, path);
    PowersTask t;
    t.rabi_min_hz = r.number("rabi_min_hz", t.rabi_min_hz);
    t.rabi_max_hz = r.number("rabi_max_hz", t.rabi_max_hz);
    t.n_points = static_cast<int>(r.integer("n_points", t.n_points));
    t.log_spacing = r.boolean("log_spacing", t.log_spacing);
    t.bw_hz = r.number("bw_hz", t.bw_hz);
    t.calib_sigma_rel = r.number("calib_sigma_rel", t.calib_sigma_rel);
    t.n_avg = r.optional_number("n_avg");
    t.noiseless = r.boolean("noiseless", t.noiseless);
    r.finish();
    return t;
}

DynamicsTask parse_dynamics(const Json& j, const std::string& path) {
    ObjectReader r(j, path);
    DynamicsTask t;
    t.protocol = r.text("protocol", t.protocol);
    if (t.protocol != "ramsey" && t.protocol != "t1")
        throw SchemaError("config: '" + path + ".protocol' must be 'ramsey' or 't1'");
    t.t_max_s = r.number("t_max_s", t.t_max_s);
    t.n_samples = static_cast<int>(r.integer("n_samples", t.n_samples));
    t.delta_pulse_hz = r.number("delta_pulse_hz", t.delta_pulse_hz);
    t.pulse_duration_s = r.number("pulse_duration_s", t.pulse_duration_s);
    t.n_traces = static_cast<int>(r.integer("n_traces", t.n_traces));
    t.freq_jitter_hz = r.number("freq_jitter_hz", t.freq_jitter_hz);
    t.rate_jitter_hz = r.number("rate_jitter_hz", t.rate_jitter_hz);
    t.n_avg = r.optional_number("n_avg");
    t.t1_n_avg = r.optional_number("t1_n_avg");
    t.noiseless = r.boolean("noiseless", t.noiseless);
    t.average = r.boolean("average", t.average);
    r.finish();
    return t;
}

SinglePointTask parse_singlepoint(const Json& j, const std::string& path) {
    ObjectReader r(j, path);
    SinglePointTask t;
    t.rabi_hz = r.number("rabi_hz", t.rabi_hz);
    t.bw_hz = r.number("bw_hz", t.bw_hz);
    t.n_avg = r.optional_number("n_avg");
    r.finish();
    return t;
}

FitTask parse_fit(const Json& j) {
    ObjectReader r(j, "fit");
    FitTask t;
    t.f01_hz = r.optional_number("f01_hz");
    if (auto v = r.optional_number("gamma_r_ref_hz")) {
        t.gamma_r_ref_hz = Uncertain{*v, r.number("gamma_r_ref_sigma_hz", 0.0)};
    } else {
        r.number("gamma_r_ref_sigma_hz", 0.0);  // tolerate sigma alone being absent
    }
    if (auto v = r.optional_number("gamma_2_ref_hz"))
        t.gamma_2_ref_hz = Uncertain{*v, r.number("gamma_2_ref_sigma_hz", 0.0)};
    else
        r.number("gamma_2_ref_sigma_hz", 0.0);
    t.free_amplitude = r.boolean("free_amplitude", false);
    t.joint = r.boolean("joint", false);
    t.init_gamma_1_hz = r.optional_number("init_gamma_1_hz");
    t.init_gamma_phi_hz = r.optional_number("init_gamma_phi_hz");
    t.init_rabi_hz = r.optional_number("init_rabi_hz");
    t.init_delta_hz = r.optional_number("init_delta_hz");
    t.rabi_hz = r.optional_number("rabi_hz");
    t.calib_sigma_rel = r.number("calib_sigma_rel", 0.0);
    if (auto v = r.optional_number("max_iter")) t.max_iter = static_cast<int>(*v);
    r.finish();
    return t;
}

Table1Config parse_table1(const Json& j) {
    ObjectReader r(j, "table1");
    Table1Config t;
    if (r.has_object("reflection"))
        t.reflection = parse_reflection(r.object("reflection"), "table1.reflection");
    if (r.has_object("onres"))
        t.onres = parse_spectrum(r.object("onres"), "table1.onres");
    if (r.has_object("offres"))
        t.offres = parse_spectrum(r.object("offres"), "table1.offres");
    if (r.has_object("scattering"))
        t.scattering = parse_powers(r.object("scattering"), "table1.scattering");
    if (r.has_object("singlepoint"))
        t.singlepoint = parse_singlepoint(r.object("singlepoint"), "table1.singlepoint");
    if (r.has_object("dynamics"))
        t.dynamics = parse_dynamics(r.object("dynamics"), "table1.dynamics");
    r.finish();
    return t;
}

}  // namespace

RateSet DeviceConfig::rates() const {
    RateSet r;
    r.gamma_r = hz_to_rad(gamma_r_hz);
    r.gamma_n = hz_to_rad(gamma_n_hz);
    r.gamma_phi = hz_to_rad(gamma_phi_hz);
    r.validate();
    return r;
}

RunConfig parse_run_config(const Json& j) {
    ObjectReader r(j, "");
    RunConfig c;
    c.schema_version = static_cast<int>(r.integer("schema_version", 0));
    if (c.schema_version != 1)
        throw SchemaError("config: schema_version must be 1");
    if (r.has_object("device")) c.device = parse_device(r.object("device"));
    if (r.has_object("chain")) c.chain = parse_chain(r.object("chain"));
    if (r.has_object("reflection"))
        c.reflection = parse_reflection(r.object("reflection"), "reflection");
    if (r.has_object("spectrum"))
        c.spectrum = parse_spectrum(r.object("spectrum"), "spectrum");
    if (r.has_object("powers")) c.powers = parse_powers(r.object("powers"), "powers");
    if (r.has_object("dynamics"))
        c.dynamics = parse_dynamics(r.object("dynamics"), "dynamics");
    if (r.has_object("fit")) c.fit = parse_fit(r.object("fit"));
    if (r.has_object("table1")) c.table1 = parse_table1(r.object("table1"));
    r.finish();
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open config '" + path + "'");
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw SchemaError("config '" + path + "': " + e.what());
    }
    return parse_run_config(j);
}

namespace {

Json task_to_json(const ReflectionTask& t) {
    return Json{{"span_hz", t.span_hz},
                {"n_points", t.n_points},
                {"sigma", t.sigma},
                {"noiseless", t.noiseless}};
}

Json task_to_json(const SpectrumTask& t) {
    Json j{{"span_hz", t.span_hz},
           {"n_points", t.n_points},
           {"delta_hz", t.delta_hz},
           {"noiseless", t.noiseless}};
    if (t.rabi_hz) j["rabi_hz"] = *t.rabi_hz;
    if (t.power_dbm) j["power_dbm"] = *t.power_dbm;
    if (t.n_avg) j["n_avg"] = *t.n_avg;
    return j;
}

Json task_to_json(const PowersTask& t) {
    Json j{{"rabi_min_hz", t.rabi_min_hz},
           {"rabi_max_hz", t.rabi_max_hz},
           {"n_points", t.n_points},
           {"log_spacing", t.log_spacing},
           {"bw_hz", t.bw_hz},
           {"calib_sigma_rel", t.calib_sigma_rel},
           {"noiseless", t.noiseless}};
    if (t.n_avg) j["n_avg"] = *t.n_avg;
    return j;
}

Json task_to_json(const DynamicsTask& t) {
    Json j{{"protocol", t.protocol},
           {"t_max_s", t.t_max_s},
           {"n_samples", t.n_samples},
           {"delta_pulse_hz", t.delta_pulse_hz},
           {"pulse_duration_s", t.pulse_duration_s},
           {"n_traces", t.n_traces},
           {"freq_jitter_hz", t.freq_jitter_hz},
           {"rate_jitter_hz", t.rate_jitter_hz},
           {"noiseless", t.noiseless},
           {"average", t.average}};
    if (t.n_avg) j["n_avg"] = *t.n_avg;
    if (t.t1_n_avg) j["t1_n_avg"] = *t.t1_n_avg;
    return j;
}

Json task_to_json(const SinglePointTask& t) {
    Json j{{"rabi_hz", t.rabi_hz}, {"bw_hz", t.bw_hz}};
    if (t.n_avg) j["n_avg"] = *t.n_avg;
    return j;
}

}  // namespace

Json run_config_to_json(const RunConfig& config) {
    Json j;
    j["schema_version"] = config.schema_version;
    if (config.device) {
        Json d{{"gamma_r_hz", config.device->gamma_r_hz},
               {"gamma_n_hz", config.device->gamma_n_hz},
               {"gamma_phi_hz", config.device->gamma_phi_hz},
               {"f01_hz", config.device->f01_hz}};
        if (config.device->transmon)
            d["transmon"] = Json{{"ej_max_hz", config.device->transmon->ej_max_hz},
                                 {"ec_hz", config.device->transmon->ec_hz},
                                 {"flux", config.device->transmon->flux}};
        j["device"] = d;
    }
    j["chain"] = Json{{"attenuation_db", config.chain.attenuation_db},
                      {"gain_db", config.chain.gain_db},
                      {"noise_photons", config.chain.noise_photons},
                      {"n_avg", config.chain.n_avg},
                      {"rbw_hz", config.chain.rbw_hz},
                      {"seed", config.chain.seed}};
    if (config.reflection) j["reflection"] = task_to_json(*config.reflection);
    if (config.spectrum) j["spectrum"] = task_to_json(*config.spectrum);
    if (config.powers) j["powers"] = task_to_json(*config.powers);
    if (config.dynamics) j["dynamics"] = task_to_json(*config.dynamics);
    if (config.table1) {
        j["table1"] = Json{{"reflection", task_to_json(config.table1->reflection)},
                           {"onres", task_to_json(config.table1->onres)},
                           {"offres", task_to_json(config.table1->offres)},
                           {"scattering", task_to_json(config.table1->scattering)},
                           {"singlepoint", task_to_json(config.table1->singlepoint)},
                           {"dynamics", task_to_json(config.table1->dynamics)}};
    }
    return j;
}

// ---------------------------------------------------------------------------
// Fit-result JSON

namespace {

/// Power of 2 pi dividing an internal value to reach its external unit.
int unit_exponent(const std::string& name) {
    static const std::vector<std::string> angular = {
        "gamma_1",    "gamma_2",     "gamma_r",     "gamma_n",   "gamma_phi",
        "rabi",       "delta",       "delta_omega", "omega01",   "gamma_s_red",
        "gamma_s_blue", "hwhm_red",  "hwhm_c",      "hwhm_blue", "center_red",
        "center_c",   "center_blue", "mean",        "sigma",     "rabi_a",
        "rabi_b",     "delta_a",     "delta_b"};
    static const std::vector<std::string> angular2 = {"g1g2", "g1gphi"};
    static const std::vector<std::string> inv_angular = {"amp_red", "amp_c",
                                                         "amp_blue"};
    if (std::find(angular.begin(), angular.end(), name) != angular.end()) return 1;
    if (std::find(angular2.begin(), angular2.end(), name) != angular2.end()) return 2;
    if (std::find(inv_angular.begin(), inv_angular.end(), name) != inv_angular.end())
        return -1;
    return 0;
}

std::string external_name(const std::string& name, int expo) {
    if (expo == 1) return name + "_hz";
    if (expo == 2) return name + "_hz2";
    if (expo == -1) return name + "_per_hz";
    return name;
}

}  // namespace

Json fit_result_to_json(const FitResult& fit, const std::string& kind) {
    Json j;
    j["schema_version"] = 1;
    j["kind"] = kind;
    j["converged"] = fit.converged;
    j["n_iter"] = fit.n_iter;
    j["n_points"] = fit.n_points;
    j["residual_norm"] = fit.residual_norm;

    Json params;
    std::vector<double> scale(fit.names.size());
    Json cov_names = Json::array();
    for (std::size_t i = 0; i < fit.names.size(); ++i) {
        const int expo = unit_exponent(fit.names[i]);
        scale[i] = std::pow(kTwoPi, expo);
        const std::string ext = external_name(fit.names[i], expo);
        params[ext] = Json{{"value", fit.params[i] / scale[i]},
                           {"sigma", std::sqrt(std::max(
                                         0.0, fit.covariance(i, i))) /
                                         scale[i]}};
        cov_names.push_back(ext);
    }
    j["params"] = params;

    Json matrix = Json::array();
    for (std::size_t i = 0; i < fit.names.size(); ++i) {
        Json row = Json::array();
        for (std::size_t k = 0; k < fit.names.size(); ++k)
            row.push_back(fit.covariance(i, k) / (scale[i] * scale[k]));
        matrix.push_back(row);
    }
    j["covariance"] = Json{{"names", cov_names}, {"matrix", matrix}};
    j["warnings"] = fit.warnings;
    return j;
}

void write_fit_result(const std::string& path, const FitResult& fit,
                      const std::string& kind) {
    write_text_file(path, fit_result_to_json(fit, kind).dump(2) + "\n");
}

void write_sidecar(const std::string& data_path, const RunConfig& config) {
    Json j;
    j["schema_version"] = 1;
    j["seed"] = config.chain.seed;
    j["resolved_config"] = run_config_to_json(config);
    write_text_file(data_path + ".meta.json", j.dump(2) + "\n");
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out = open_out(path);
    out << text;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace ratefit
