#include "ratefit/chain.hpp"

#include <cmath>

#include "ratefit/rng.hpp"
#include "ratefit/units.hpp"

namespace ratefit {

void ChainConfig::validate() const {
    if (!(n_avg >= 1.0)) throw InvalidInput("ChainConfig: n_avg must be >= 1");
    if (!(noise_photons >= 0.0))
        throw InvalidInput("ChainConfig: noise_photons must be >= 0");
    if (rbw_hz < 0.0) throw InvalidInput("ChainConfig: rbw_hz must be >= 0");
}

double dbm_to_photon_flux(double p_dbm, double f01_hz) {
    if (!std::isfinite(p_dbm)) throw InvalidInput("dbm_to_photon_flux: non-finite power");
    if (!(f01_hz > 0.0)) throw InvalidInput("dbm_to_photon_flux: f01 must be > 0");
    return dbm_to_watts(p_dbm) / (kPlanck * f01_hz);
}

double photon_flux_to_dbm(double flux, double f01_hz) {
    if (!(flux > 0.0)) throw InvalidInput("photon_flux_to_dbm: flux must be > 0");
    if (!(f01_hz > 0.0)) throw InvalidInput("photon_flux_to_dbm: f01 must be > 0");
    return watts_to_dbm(flux * kPlanck * f01_hz);
}

Spectrum synthesize_noisy_psd(const Spectrum& clean, const ChainConfig& chain) {
    clean.validate();
    chain.validate();
    if (clean.size() < 2)
        throw InvalidInput("synthesize_noisy_psd: need at least 2 points");

    // The campaign quotes the system noise per resolution bandwidth without
    // stating the bandwidth, so it is configurable; the grid spacing is the
    // natural default for a PSD sampled once per bin.
    const double grid_hz =
        (clean.omega_grid[1] - clean.omega_grid[0]) / kTwoPi;
    const double rbw = chain.rbw_hz > 0.0 ? chain.rbw_hz : grid_hz;
    const double floor = chain.noise_photons / (kTwoPi * rbw);
    const double inv_sqrt_n = 1.0 / std::sqrt(chain.n_avg);

    RandomStream root(chain.seed);
    Spectrum out;
    out.omega_grid = clean.omega_grid;
    out.psd.resize(clean.size());
    out.sigma.resize(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
        RandomStream point = root.fork(i);
        out.sigma[i] = (clean.psd[i] + floor) * inv_sqrt_n;
        out.psd[i] = clean.psd[i] + out.sigma[i] * point.normal();
    }
    return out;
}

ComplexTrace synthesize_noisy_trace(const ComplexTrace& clean,
                                    const ChainConfig& chain) {
    clean.validate();
    chain.validate();
    if (clean.size() < 2)
        throw InvalidInput("synthesize_noisy_trace: need at least 2 samples");

    const double bw = 1.0 / (clean.t_grid[1] - clean.t_grid[0]);
    const double noise_flux = chain.noise_photons * bw;

    RandomStream root(chain.seed);
    ComplexTrace out;
    out.role = clean.role;
    out.t_grid = clean.t_grid;
    out.values.resize(clean.size());
    out.sigma.resize(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
        RandomStream sample = root.fork(i);
        if (clean.role == TraceRole::Amplitude) {
            const double sq = std::sqrt(noise_flux / (2.0 * chain.n_avg));
            out.sigma[i] = sq;
            out.values[i] = clean.values[i] +
                            Complex{sq * sample.normal(), sq * sample.normal()};
        } else {
            // Power detection: variance of |signal + noise|^2 averages, with
            // the noise-noise and signal-noise cross terms.
            const double p = std::max(clean.values[i].real(), 0.0);
            const double s = (noise_flux + 2.0 * std::sqrt(p * noise_flux)) /
                             std::sqrt(chain.n_avg);
            out.sigma[i] = s;
            out.values[i] = Complex{clean.values[i].real() + s * sample.normal(), 0.0};
        }
    }
    return out;
}

std::vector<Complex> synthesize_noisy_reflection(const std::vector<Complex>& clean,
                                                 double sigma,
                                                 const ChainConfig& chain) {
    chain.validate();
    if (sigma < 0.0)
        throw InvalidInput("synthesize_noisy_reflection: sigma must be >= 0");
    RandomStream root(chain.seed);
    std::vector<Complex> out(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
        RandomStream point = root.fork(i);
        out[i] = clean[i] + Complex{sigma * point.normal(), sigma * point.normal()};
    }
    return out;
}

void DriftEnsembleSpec::validate() const {
    if (n_traces < 1) throw InvalidInput("DriftEnsembleSpec: n_traces must be >= 1");
    if (interval_s < 0.0) throw InvalidInput("DriftEnsembleSpec: interval must be >= 0");
}

std::vector<DriftDraw> drift_ensemble(const RateSet& base,
                                      double freq_jitter_sigma,
                                      double rate_jitter_sigma,
                                      const DriftEnsembleSpec& spec,
                                      std::uint64_t seed) {
    base.validate();
    spec.validate();
    if (freq_jitter_sigma < 0.0 || rate_jitter_sigma < 0.0)
        throw InvalidInput("drift_ensemble: jitter sigmas must be >= 0");

    RandomStream root(seed);
    std::vector<DriftDraw> out;
    out.reserve(spec.n_traces);
    for (std::size_t i = 0; i < spec.n_traces; ++i) {
        RandomStream trace = root.fork(i);
        DriftDraw d;
        d.rates = base;
        d.rates.gamma_r = std::max(0.0, trace.normal(base.gamma_r, rate_jitter_sigma));
        d.rates.gamma_n = std::max(0.0, trace.normal(base.gamma_n, rate_jitter_sigma));
        d.rates.gamma_phi = std::max(0.0, trace.normal(base.gamma_phi, rate_jitter_sigma));
        d.delta_omega01 = trace.normal(0.0, freq_jitter_sigma);
        out.push_back(d);
    }
    return out;
}

}  // namespace ratefit
