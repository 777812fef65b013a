#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <unistd.h>

#include "ratefit/io.hpp"
#include "ratefit/units.hpp"

using namespace ratefit;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("ratefit_io_XXXXXX" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("reflection CSV round trip") {
    TempDir dir;
    ReflectionData d;
    for (int i = 0; i < 20; ++i) {
        d.freq_hz.push_back(5.5e9 + 1e4 * i + 0.123456789);
        d.r.emplace_back(0.1 * i - 1.0, std::sin(0.3 * i));
    }
    d.sigma = 0.0125;
    const std::string path = dir.file("r.csv");
    write_reflection_csv(path, d);
    const ReflectionData back = read_reflection_csv(path);
    REQUIRE(back.freq_hz.size() == d.freq_hz.size());
    for (std::size_t i = 0; i < d.freq_hz.size(); ++i) {
        CHECK(back.freq_hz[i] == d.freq_hz[i]);  // 17 digits round-trip exactly
        CHECK(back.r[i] == d.r[i]);
    }
    CHECK(back.sigma == d.sigma);
}

TEST_CASE("spectrum CSV uses per-Hz densities at the boundary") {
    TempDir dir;
    Spectrum s;
    const double f01 = 5.526e9;
    for (int i = 0; i < 10; ++i) {
        s.omega_grid.push_back(hz_to_rad(f01) + kTwoPi * (i - 5) * 1e5);
        s.psd.push_back(0.01 * (i + 1));
        s.sigma.push_back(1e-4);
    }
    const std::string path = dir.file("s.csv");
    write_spectrum_csv(path, s, f01);

    // The file carries detuning in Hz and a per-Hz density.
    const std::string text = read_text_file(path);
    CHECK(text.find("detuning_hz,psd,sigma") == 0);

    const Spectrum back = read_spectrum_csv(path, f01);
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(back.omega_grid[i] == doctest::Approx(s.omega_grid[i]).epsilon(1e-15));
        CHECK(back.psd[i] == doctest::Approx(s.psd[i]).epsilon(1e-15));
        CHECK(back.sigma[i] == doctest::Approx(s.sigma[i]).epsilon(1e-15));
    }
}

TEST_CASE("powers and trace CSV round trips") {
    TempDir dir;
    PowersData p;
    for (int i = 0; i < 7; ++i) {
        p.rabi_hz.push_back(1e4 * (i + 1));
        p.p_in.push_back(10.0 * i);
        p.p_coh.push_back(5.0 * i);
        p.p_incoh.push_back(3.0 * i);
        p.p_loss.push_back(2.0 * i);
        p.sigma_in.push_back(0.1);
        p.sigma_coh.push_back(0.2);
        p.sigma_incoh.push_back(0.3);
        p.sigma_loss.push_back(0.4);
    }
    const std::string ppath = dir.file("p.csv");
    write_powers_csv(ppath, p);
    const PowersData pback = read_powers_csv(ppath);
    CHECK(pback.rabi_hz == p.rabi_hz);
    CHECK(pback.p_loss == p.p_loss);
    CHECK(pback.sigma_loss == p.sigma_loss);

    ComplexTrace t;
    t.role = TraceRole::Amplitude;
    for (int i = 0; i < 9; ++i) {
        t.t_grid.push_back(1e-8 * i);
        t.values.emplace_back(std::cos(0.2 * i), std::sin(0.2 * i));
        t.sigma.push_back(0.01);
    }
    const std::string tpath = dir.file("t.csv");
    write_trace_csv(tpath, t);
    const ComplexTrace tback = read_trace_csv(tpath);
    CHECK(tback.role == TraceRole::Amplitude);
    CHECK(tback.values == t.values);

    ComplexTrace pw;
    pw.role = TraceRole::Power;
    for (int i = 0; i < 9; ++i) {
        pw.t_grid.push_back(1e-8 * i);
        pw.values.emplace_back(std::exp(-0.2 * i), 0.0);
    }
    const std::string wpath = dir.file("w.csv");
    write_trace_csv(wpath, pw);
    const ComplexTrace wback = read_trace_csv(wpath);
    CHECK(wback.role == TraceRole::Power);
    CHECK(wback.values == pw.values);
}

TEST_CASE("CSV schema violations name the problem") {
    TempDir dir;
    SUBCASE("empty file") {
        write_text_file(dir.file("e.csv"), "");
        CHECK_THROWS_AS(read_reflection_csv(dir.file("e.csv")), SchemaError);
    }
    SUBCASE("wrong column name") {
        write_text_file(dir.file("b.csv"), "freq_hz,real,imag\n1,2,3\n");
        try {
            read_reflection_csv(dir.file("b.csv"));
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(std::string(e.what()).find("re_r") != std::string::npos);
        }
    }
    SUBCASE("ragged row with the line number") {
        write_text_file(dir.file("c.csv"), "freq_hz,re_r,im_r\n1,2,3\n4,5\n");
        try {
            read_reflection_csv(dir.file("c.csv"));
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        }
    }
    SUBCASE("non-numeric cell") {
        write_text_file(dir.file("d.csv"), "freq_hz,re_r,im_r\n1,abc,3\n");
        CHECK_THROWS_AS(read_reflection_csv(dir.file("d.csv")), SchemaError);
    }
    SUBCASE("header only, no rows") {
        write_text_file(dir.file("h.csv"), "freq_hz,re_r,im_r\n");
        CHECK_THROWS_AS(read_reflection_csv(dir.file("h.csv")), SchemaError);
    }
}

TEST_CASE("run config: strict schema") {
    SUBCASE("unknown key rejected with its path") {
        Json j{{"schema_version", 1},
               {"device",
                {{"gamma_r_hz", 227e3}, {"f01_hz", 5.5e9}, {"bogus", 1.0}}}};
        try {
            parse_run_config(j);
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(std::string(e.what()).find("device.bogus") != std::string::npos);
        }
    }
    SUBCASE("missing schema_version rejected") {
        Json j{{"device", {{"gamma_r_hz", 227e3}, {"f01_hz", 5.5e9}}}};
        CHECK_THROWS_AS(parse_run_config(j), SchemaError);
    }
    SUBCASE("wrong type rejected") {
        Json j{{"schema_version", 1},
               {"device", {{"gamma_r_hz", "loud"}, {"f01_hz", 5.5e9}}}};
        CHECK_THROWS_AS(parse_run_config(j), SchemaError);
    }
    SUBCASE("round trip through serialization") {
        Json j{{"schema_version", 1},
               {"device", {{"gamma_r_hz", 227e3}, {"f01_hz", 5.5e9}}},
               {"chain", {{"seed", 42}, {"noise_photons", 12.5}}},
               {"spectrum", {{"rabi_hz", 9e6}, {"n_points", 501}}}};
        const RunConfig c = parse_run_config(j);
        CHECK(c.chain.seed == 42);
        CHECK(c.spectrum.has_value());
        const RunConfig back = parse_run_config(run_config_to_json(c));
        CHECK(back.chain.noise_photons == 12.5);
        CHECK(back.spectrum->rabi_hz == 9e6);
        CHECK(back.spectrum->n_points == 501);
    }
    SUBCASE("dynamics protocol validated") {
        Json j{{"schema_version", 1}, {"dynamics", {{"protocol", "t2echo"}}}};
        CHECK_THROWS_AS(parse_run_config(j), SchemaError);
    }
}

TEST_CASE("fit-result JSON carries Hz units") {
    FitResult fit;
    fit.names = {"gamma_2", "amplitude"};
    fit.params = Eigen::VectorXd(2);
    fit.params << kTwoPi * 141e3, 0.5;
    fit.covariance = Eigen::MatrixXd::Zero(2, 2);
    fit.covariance(0, 0) = kTwoPi * kTwoPi * 1e6;  // 1 kHz sigma
    fit.covariance(1, 1) = 1e-4;
    fit.converged = true;
    fit.n_points = 10;
    const Json j = fit_result_to_json(fit, "test");
    CHECK(j["params"]["gamma_2_hz"]["value"].get<double>() ==
          doctest::Approx(141e3).epsilon(1e-12));
    CHECK(j["params"]["gamma_2_hz"]["sigma"].get<double>() ==
          doctest::Approx(1e3).epsilon(1e-12));
    CHECK(j["params"]["amplitude"]["value"].get<double>() == 0.5);
    CHECK(j["covariance"]["matrix"][0][0].get<double>() ==
          doctest::Approx(1e6).epsilon(1e-12));
}
