#include <doctest.h>

#include <cmath>

#include "ratefit/chain.hpp"
#include "ratefit/dynamics.hpp"
#include "ratefit/estimators.hpp"
#include "ratefit/pipeline.hpp"
#include "ratefit/qed.hpp"
#include "ratefit/units.hpp"

using namespace ratefit;

namespace {

RateSet reference_rates() {
    RateSet r;
    r.gamma_r = kTwoPi * 227e3;
    r.gamma_n = kTwoPi * 48e3;
    r.gamma_phi = kTwoPi * 3e3;
    return r;
}

Spectrum flat_spectrum(std::size_t n, double level) {
    Spectrum s;
    for (std::size_t i = 0; i < n; ++i) {
        s.omega_grid.push_back(kTwoPi * (5e9 + 1e3 * static_cast<double>(i)));
        s.psd.push_back(level);
    }
    return s;
}

}  // namespace

TEST_CASE("dBm to photon flux") {
    SUBCASE("reference operating point") {
        const double flux = dbm_to_photon_flux(-116.0, 5.52e9);
        const double expected =
            std::pow(10.0, (-116.0 - 30.0) / 10.0) / (6.62607015e-34 * 5.52e9);
        CHECK(flux == doctest::Approx(expected).epsilon(1e-14));
        CHECK(flux == doctest::Approx(6.87e8).epsilon(3e-3));
    }
    SUBCASE("+30 dBm is one watt") {
        // With h f01 = 1 J the flux equals the power in watts.
        const double f01 = 1.0 / kPlanck;
        CHECK(dbm_to_photon_flux(30.0, f01) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("round trip") {
        const double p = photon_flux_to_dbm(6.87e8, 5.52e9);
        CHECK(dbm_to_photon_flux(p, 5.52e9) == doctest::Approx(6.87e8).epsilon(1e-12));
    }
    SUBCASE("invalid inputs") {
        CHECK_THROWS_AS(dbm_to_photon_flux(std::nan(""), 5e9), InvalidInput);
        CHECK_THROWS_AS(dbm_to_photon_flux(-100.0, 0.0), InvalidInput);
    }
}

TEST_CASE("chain dB arithmetic is exactly multiplicative") {
    const double a = -145.3, g = 114.7;
    CHECK(db_to_linear(a + g) ==
          doctest::Approx(db_to_linear(a) * db_to_linear(g)).epsilon(1e-12));
    CHECK(linear_to_db(db_to_linear(a)) == doctest::Approx(a).epsilon(1e-12));
}

TEST_CASE("noisy PSD synthesis") {
    ChainConfig chain;
    chain.noise_photons = 49.0;
    chain.seed = 1234;

    SUBCASE("averaging limit recovers the clean spectrum") {
        chain.n_avg = 1e22;
        const Spectrum clean = flat_spectrum(64, 0.37);
        const Spectrum noisy = synthesize_noisy_psd(clean, chain);
        for (std::size_t i = 0; i < clean.size(); ++i)
            CHECK(noisy.psd[i] == doctest::Approx(clean.psd[i]).epsilon(1e-9));
    }
    SUBCASE("shot-limited model: sigma equals the psd") {
        chain.noise_photons = 0.0;
        chain.n_avg = 1.0;
        const Spectrum clean = flat_spectrum(16, 0.37);
        const Spectrum noisy = synthesize_noisy_psd(clean, chain);
        for (double s : noisy.sigma) CHECK(s == doctest::Approx(0.37).epsilon(1e-14));
    }
    SUBCASE("deterministic under the seed") {
        chain.n_avg = 100.0;
        const Spectrum clean = flat_spectrum(128, 0.37);
        const Spectrum a = synthesize_noisy_psd(clean, chain);
        const Spectrum b = synthesize_noisy_psd(clean, chain);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a.psd[i] == b.psd[i]);
            CHECK(a.sigma[i] == b.sigma[i]);
        }
        chain.seed = 1235;
        const Spectrum c = synthesize_noisy_psd(clean, chain);
        bool any_diff = false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a.psd[i] != c.psd[i]) any_diff = true;
        CHECK(any_diff);
    }
    SUBCASE("noise floor follows the configured resolution bandwidth") {
        chain.n_avg = 1.0;
        chain.rbw_hz = 1.0;
        Spectrum clean = flat_spectrum(8, 0.0);
        const Spectrum noisy = synthesize_noisy_psd(clean, chain);
        CHECK(noisy.sigma[0] == doctest::Approx(49.0 / kTwoPi).epsilon(1e-12));
    }
    SUBCASE("injected noise is white") {
        chain.n_avg = 1.0;
        chain.rbw_hz = 1.0;
        const std::size_t n = 1'000'000;
        Spectrum clean;
        clean.omega_grid.resize(n);
        clean.psd.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            clean.omega_grid[i] = kTwoPi * (5e9 + static_cast<double>(i));
        const Spectrum noisy = synthesize_noisy_psd(clean, chain);
        std::vector<double> z(n);
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = noisy.psd[i] / noisy.sigma[i];
            mean += z[i];
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : z) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n - 1);
        CHECK(mean == doctest::Approx(0.0).epsilon(1.0));  // |mean| < ~4/sqrt(n)
        CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
        CHECK(var == doctest::Approx(1.0).epsilon(0.01));
        for (std::size_t lag = 1; lag <= 3; ++lag) {
            double acc = 0.0;
            for (std::size_t i = 0; i + lag < n; ++i)
                acc += (z[i] - mean) * (z[i + lag] - mean);
            acc /= (static_cast<double>(n - lag) * var);
            CHECK(std::abs(acc) < 4.0 / std::sqrt(static_cast<double>(n)));
        }
    }
}

TEST_CASE("noisy trace synthesis") {
    ChainConfig chain;
    chain.noise_photons = 49.0;
    chain.n_avg = 2.3e6;
    chain.seed = 77;
    const RateSet r = reference_rates();
    std::vector<double> grid(160);
    for (std::size_t i = 0; i < grid.size(); ++i)
        grid[i] = 8e-6 * static_cast<double>(i) / (grid.size() - 1);

    SUBCASE("zero system noise is the identity on amplitude traces") {
        chain.noise_photons = 0.0;
        const ComplexTrace clean = ramsey_emission(kTwoPi * 125e3, r, grid);
        const ComplexTrace noisy = synthesize_noisy_trace(clean, chain);
        for (std::size_t i = 0; i < clean.size(); ++i) {
            CHECK(noisy.values[i] == clean.values[i]);
            CHECK(noisy.sigma[i] == 0.0);
        }
    }
    SUBCASE("zero system noise is the identity on power traces") {
        chain.noise_photons = 0.0;
        const ComplexTrace clean = t1_power_trace(r, grid, 1.0);
        const ComplexTrace noisy = synthesize_noisy_trace(clean, chain);
        for (std::size_t i = 0; i < clean.size(); ++i)
            CHECK(noisy.values[i].real() ==
                  doctest::Approx(clean.values[i].real()).epsilon(1e-14));
    }
    SUBCASE("doubling the averages scales sigma by 1/sqrt(2)") {
        const ComplexTrace clean = ramsey_emission(kTwoPi * 125e3, r, grid);
        const ComplexTrace a = synthesize_noisy_trace(clean, chain);
        chain.n_avg *= 2.0;
        const ComplexTrace b = synthesize_noisy_trace(clean, chain);
        CHECK(a.sigma[0] / b.sigma[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    }
    SUBCASE("per-quadrature sigma follows the sample bandwidth") {
        const ComplexTrace clean = ramsey_emission(kTwoPi * 125e3, r, grid);
        const ComplexTrace noisy = synthesize_noisy_trace(clean, chain);
        const double bw = 1.0 / (grid[1] - grid[0]);
        CHECK(noisy.sigma[0] ==
              doctest::Approx(std::sqrt(49.0 * bw / (2.0 * chain.n_avg)))
                  .epsilon(1e-12));
    }
}

TEST_CASE("drift ensemble") {
    const RateSet base = reference_rates();
    DriftEnsembleSpec spec;
    spec.n_traces = 10000;

    SUBCASE("zero jitter reproduces the base") {
        DriftEnsembleSpec small;
        small.n_traces = 5;
        const auto draws = drift_ensemble(base, 0.0, 0.0, small, 42);
        for (const DriftDraw& d : draws) {
            CHECK(d.rates.gamma_r == base.gamma_r);
            CHECK(d.rates.gamma_n == base.gamma_n);
            CHECK(d.rates.gamma_phi == base.gamma_phi);
            CHECK(d.delta_omega01 == 0.0);
        }
    }
    SUBCASE("law of large numbers") {
        const double sig_f = kTwoPi * 20e3;
        const double sig_r = kTwoPi * 5e3;
        const auto draws = drift_ensemble(base, sig_f, sig_r, spec, 42);
        double mean_f = 0.0, mean_n = 0.0;
        for (const DriftDraw& d : draws) {
            mean_f += d.delta_omega01;
            mean_n += d.rates.gamma_n;
        }
        mean_f /= spec.n_traces;
        mean_n /= spec.n_traces;
        const double tol_f = 3.0 * sig_f / std::sqrt(static_cast<double>(spec.n_traces));
        CHECK(std::abs(mean_f) < tol_f);
        CHECK(std::abs(mean_n - base.gamma_n) <
              3.0 * sig_r / std::sqrt(static_cast<double>(spec.n_traces)));
        for (const DriftDraw& d : draws) CHECK(d.rates.gamma_n >= 0.0);
    }
    SUBCASE("reproducible from the seed") {
        DriftEnsembleSpec small;
        small.n_traces = 7;
        const auto a = drift_ensemble(base, kTwoPi * 1e3, kTwoPi * 1e3, small, 9);
        const auto b = drift_ensemble(base, kTwoPi * 1e3, kTwoPi * 1e3, small, 9);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].delta_omega01 == b[i].delta_omega01);
            CHECK(a[i].rates.gamma_n == b[i].rates.gamma_n);
        }
    }
}

TEST_CASE("monte-carlo: triplet fit recovers gamma_2 at reference noise") {
    // Strong-drive acquisition: the fitted central width scatters within the
    // quoted +-2 kHz across noise seeds.
    DeviceConfig device;
    device.gamma_r_hz = 227e3;
    device.gamma_n_hz = 48e3;
    device.gamma_phi_hz = 3e3;
    device.f01_hz = 5.526e9;
    ChainConfig chain;
    chain.noise_photons = 49.0;
    chain.rbw_hz = 1.0;
    SpectrumTask task;
    task.span_hz = 24e6;
    task.n_points = 1201;
    task.rabi_hz = 9e6;
    task.n_avg = 1e7;

    std::vector<double> fits;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        chain.seed = 1000 + seed;
        const Spectrum spec = simulate_spectrum(device, task, chain);
        fits.push_back(rad_to_hz(fit_mollow_triplet(spec).gamma_2.value));
    }
    double mean = 0.0;
    for (double f : fits) mean += f;
    mean /= static_cast<double>(fits.size());
    double var = 0.0;
    for (double f : fits) var += (f - mean) * (f - mean);
    const double std_dev = std::sqrt(var / (fits.size() - 1.0));
    CHECK(std::abs(mean - 140.5e3) < 1e3);
    CHECK(std_dev < 2e3);
}
