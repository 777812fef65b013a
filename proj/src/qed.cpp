#include "ratefit/qed.hpp"

#include <cmath>
#include <sstream>

#include "ratefit/units.hpp"

namespace ratefit {

namespace {

constexpr Complex kI{0.0, 1.0};

/// Denominator of the stationary solution, Omega^2 Gamma_2 + Gamma_1
/// (Delta^2 + Gamma_2^2). Zero only for fully degenerate parameters.
double stationary_denominator(double delta, double rabi, const RateSet& r) {
    const double g1 = r.gamma_1();
    const double g2 = r.gamma_2();
    return rabi * rabi * g2 + g1 * (delta * delta + g2 * g2);
}

}  // namespace

DerivedRates derive_rates(const RateSet& rates) {
    rates.validate();
    return DerivedRates{rates.gamma_1(), rates.gamma_2(), rates.beta(),
                        rates.purcell()};
}

double transmon_frequency(const TransmonParams& params) {
    params.validate();
    const double ej = params.ej_max_hz * std::abs(std::cos(M_PI * params.flux));
    const double ec = params.ec_hz;
    if (!(8.0 * ej * ec > ec * ec))
        throw ValidityError(
            "transmon_frequency: flux too close to half-integer, "
            "8 E_J(flux) <= E_C breaks the dispersive approximation");
    return std::sqrt(8.0 * ej * ec) - ec;
}

BlochVector steady_state(const DriveConfig& drive, const RateSet& rates) {
    drive.validate();
    rates.validate();
    const double delta = drive.delta();
    const double rabi = drive.rabi;
    const double denom = stationary_denominator(delta, rabi, rates);
    if (denom <= 0.0)
        throw SingularityError("steady_state: degenerate parameters, "
                               "Omega^2 Gamma_2 + Gamma_1 (Delta^2 + Gamma_2^2) = 0");
    BlochVector s;
    s.s1 = rabi * rates.gamma_1() * Complex{delta, -rates.gamma_2()} /
           (2.0 * denom);
    s.s2 = rabi * rabi * rates.gamma_2() / (2.0 * denom);
    return s;
}

Complex reflection_coefficient(const DriveConfig& drive, const RateSet& rates,
                               ReflectionMode mode) {
    drive.validate();
    rates.validate();
    const double delta = drive.delta();
    const double g1 = rates.gamma_1();
    const double g2 = rates.gamma_2();
    const double gr = rates.gamma_r;

    switch (mode) {
        case ReflectionMode::Full: {
            const double denom = stationary_denominator(delta, drive.rabi, rates);
            if (denom <= 0.0)
                throw SingularityError("reflection_coefficient: degenerate denominator");
            return 1.0 - kI * gr * g1 * Complex{delta, -g2} / denom;
        }
        case ReflectionMode::WeakProbe: {
            if (delta == 0.0 && g2 == 0.0)
                throw SingularityError("reflection_coefficient: Delta + i Gamma_2 = 0");
            return 1.0 - kI * gr / Complex{delta, g2};
        }
        case ReflectionMode::Resonant: {
            if (delta != 0.0)
                throw InvalidInput("reflection_coefficient: resonant mode requires Delta = 0");
            if (gr <= 0.0)
                throw SingularityError("reflection_coefficient: Gamma_r = 0 in resonant mode");
            const double denom = drive.rabi * drive.rabi / (g1 * gr) + g2 / gr;
            if (denom <= 0.0)
                throw SingularityError("reflection_coefficient: degenerate denominator");
            return Complex{1.0 - 1.0 / denom, 0.0};
        }
    }
    throw InvalidInput("reflection_coefficient: unknown mode");
}

double incoherent_psd_at(double d01, double delta, double rabi,
                         const RateSet& rates) {
    const double g1 = rates.gamma_1();
    const double g2 = rates.gamma_2();
    const double denom = stationary_denominator(delta, rabi, rates);
    if (denom <= 0.0)
        throw SingularityError("incoherent_psd_at: degenerate stationary state");

    const Complex s1 = rabi * g1 * Complex{delta, -g2} / (2.0 * denom);
    const double s2 = rabi * rabi * g2 / (2.0 * denom);
    const Complex s1c = std::conj(s1);

    // nu = omega - omega_p; the three poles of the rotating-frame generator
    // shifted by the detection frequency.
    const double nu = d01 - delta;
    const Complex mu1 = Complex{-g2, d01};
    const Complex mu2 = Complex{-g2, d01 - 2.0 * delta};
    const Complex mu3 = Complex{-g1, nu};

    const Complex den = 2.0 * mu1 * mu2 * mu3 +
                        rabi * rabi * (mu1 + mu2);
    const double scale = std::max({g1 * g1 * g1, g2 * g2 * g2,
                                   std::abs(nu * nu * nu), rabi * rabi * rabi});
    if (std::abs(den) < 1e-300 || std::abs(den) < 1e-14 * scale) {
        std::ostringstream msg;
        msg << "incoherent_psd_at: singular denominator at detuning d01 = "
            << d01 << " rad/s";
        throw SingularityError(msg.str());
    }

    const double dev = std::norm(s1) - s2;  // |s1|^2 - s2
    const Complex num = dev * (2.0 * mu2 * mu3 + rabi * rabi) +
                        rabi * rabi * s1c * s1c -
                        2.0 * kI * rabi * s1c * s2 * mu2;
    const Complex i3 = num / den;
    return rates.gamma_r / M_PI * i3.real();
}

Spectrum incoherent_spectrum(const std::vector<double>& omega_grid,
                             const DriveConfig& drive, const RateSet& rates) {
    drive.validate();
    rates.validate();
    Spectrum s;
    s.omega_grid = omega_grid;
    s.psd.reserve(omega_grid.size());
    for (double w : omega_grid)
        s.psd.push_back(incoherent_psd_at(w - drive.omega_q, drive.delta(),
                                          drive.rabi, rates));
    s.validate();
    return s;
}

Spectrum mollow_triplet_approx(const std::vector<double>& omega_grid,
                               const DriveConfig& drive, const RateSet& rates,
                               double validity_factor) {
    drive.validate();
    rates.validate();
    if (drive.delta() != 0.0)
        throw ValidityError("mollow_triplet_approx: requires Delta = 0");
    const double g2 = rates.gamma_2();
    if (!(drive.rabi > validity_factor * g2))
        throw ValidityError("mollow_triplet_approx: Rabi amplitude below the "
                            "resolved-triplet threshold");
    const double gs = 0.5 * (rates.gamma_1() + g2);
    const double rabi = drive.rabi;
    // Sum-rule convention: prefactor Gamma_r / (8 pi) makes the saturated
    // weights Gamma_r (1/4, 1/8, 1/8) and the total the saturated incoherent
    // flux Gamma_r / 2.
    const double pref = rates.gamma_r / (8.0 * M_PI);
    Spectrum s;
    s.omega_grid = omega_grid;
    s.psd.reserve(omega_grid.size());
    for (double w : omega_grid) {
        const double d = w - drive.omega_q;
        const double v = gs / ((d + rabi) * (d + rabi) + gs * gs) +
                         2.0 * g2 / (d * d + g2 * g2) +
                         gs / ((d - rabi) * (d - rabi) + gs * gs);
        s.psd.push_back(pref * v);
    }
    s.validate();
    return s;
}

DressedModel dressed_asymmetry(const DriveConfig& drive, const RateSet& rates,
                               DressedMixing mixing) {
    drive.validate();
    rates.validate();
    if (drive.rabi <= 0.0)
        throw InvalidInput("dressed_asymmetry: dressed basis undefined at Omega = 0");

    const double delta = drive.delta();
    const double g1 = rates.gamma_1();

    // Mixing angle of |n,+> = sin t |g,n+1> + cos t |e,n>, taken on the
    // branch continuous in Delta with theta(0) = pi/4 and theta -> 0 as
    // Delta -> -inf (so |n,+> -> |e,n> below resonance).
    const double theta = 0.5 * std::atan2(drive.rabi, -delta);
    const double c2 = std::cos(theta) * std::cos(theta);
    const double s2 = std::sin(theta) * std::sin(theta);

    DressedModel m;
    m.theta = theta;
    m.delta = delta;
    m.rate_pm = g1 * c2 * c2;
    m.rate_mp = g1 * s2 * s2;
    m.rate_pp = m.rate_mm = g1 * s2 * c2;
    m.mix_rate = mixing == DressedMixing::Literal
                     ? rates.gamma_phi
                     : 2.0 * rates.gamma_phi * s2 * c2;

    // Stationary occupations from (rate_pm + mix) P+ = (rate_mp + mix) P-.
    const double total = m.rate_pm + m.rate_mp + 2.0 * m.mix_rate;
    m.pop_plus = (m.rate_mp + m.mix_rate) / total;
    m.pop_minus = (m.rate_pm + m.mix_rate) / total;
    return m;
}

PowerBudget power_balance(double rabi, const RateSet& rates) {
    rates.validate();
    if (rabi < 0.0) throw InvalidInput("power_balance: rabi must be >= 0");
    PowerBudget p;
    if (rabi == 0.0) return p;
    if (rates.gamma_r <= 0.0)
        throw InvalidInput("power_balance: P_in undefined for Gamma_r = 0 with Omega > 0");

    const double g1 = rates.gamma_1();
    const double g2 = rates.gamma_2();
    const double gr = rates.gamma_r;
    const double o2 = rabi * rabi;
    const double d = g1 * g2 + o2;

    p.p_in = o2 / (4.0 * gr);
    const double refl = 1.0 - g1 * gr / d;
    p.p_coh = p.p_in * refl * refl;
    p.p_incoh = 0.5 * gr * o2 * (g1 * rates.gamma_phi + o2) / (d * d);
    p.p_loss = rates.gamma_n * o2 / (2.0 * d);
    return p;
}

RegionBoundaries region_boundaries(const RateSet& rates) {
    rates.validate();
    const double g1 = rates.gamma_1();
    const double g2 = rates.gamma_2();
    const double gr = rates.gamma_r;
    if (gr <= 0.0 || g1 <= 0.0 || g2 <= 0.0)
        throw InvalidInput("region_boundaries: needs gamma_r, gamma_1, gamma_2 > 0");

    RegionBoundaries b;
    b.omega_sat = (1.0 + 1.0 / std::sqrt(2.0)) * gr;
    b.omega_low = std::sqrt(g1 * g2 * rates.gamma_n / gr);
    const double diff = gr - g2;
    b.gamma_n_crit = g1 * diff * diff / (2.0 * gr * g2);
    if (diff > 0.0)
        b.omega_dip = std::sqrt(g1 * diff);
    return b;
}

double rabi_from_power(double p_dbm, double attenuation_db, double gamma_r,
                       double f01_hz) {
    if (!std::isfinite(p_dbm) || !std::isfinite(attenuation_db))
        throw InvalidInput("rabi_from_power: power must be finite");
    if (f01_hz <= 0.0 || gamma_r <= 0.0)
        throw InvalidInput("rabi_from_power: needs f01 > 0 and gamma_r > 0");
    const double watts_at_qubit = dbm_to_watts(p_dbm + attenuation_db);
    const double flux = watts_at_qubit / (kPlanck * f01_hz);
    return 2.0 * std::sqrt(gamma_r * flux);
}

double power_for_rabi(double rabi, double attenuation_db, double gamma_r,
                      double f01_hz) {
    if (!std::isfinite(rabi) || rabi < 0.0)
        throw InvalidInput("power_for_rabi: rabi must be finite and >= 0");
    if (f01_hz <= 0.0 || gamma_r <= 0.0)
        throw InvalidInput("power_for_rabi: needs f01 > 0 and gamma_r > 0");
    const double flux = rabi * rabi / (4.0 * gamma_r);
    const double watts_at_qubit = flux * kPlanck * f01_hz;
    return watts_to_dbm(watts_at_qubit) - attenuation_db;
}

}  // namespace ratefit
