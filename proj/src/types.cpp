#include "ratefit/types.hpp"

#include <cmath>

namespace ratefit {

namespace {

bool finite(double x) { return std::isfinite(x); }

}  // namespace

double RateSet::beta() const {
    const double g1 = gamma_1();
    if (g1 <= 0.0) throw InvalidInput("beta undefined: gamma_r + gamma_n = 0");
    return gamma_r / g1;
}

double RateSet::purcell() const {
    const double denom = gamma_n + 2.0 * gamma_phi;
    if (denom <= 0.0)
        throw InvalidInput("purcell undefined: gamma_n + 2 gamma_phi = 0");
    return gamma_r / denom;
}

void RateSet::validate() const {
    if (!finite(gamma_r) || !finite(gamma_n) || !finite(gamma_phi))
        throw InvalidInput("RateSet: rates must be finite");
    if (gamma_r < 0.0 || gamma_n < 0.0 || gamma_phi < 0.0)
        throw InvalidInput("RateSet: rates must be >= 0");
    if (gamma_r_sigma < 0.0 || gamma_n_sigma < 0.0 || gamma_phi_sigma < 0.0)
        throw InvalidInput("RateSet: uncertainties must be >= 0");
}

void DriveConfig::validate() const {
    if (!finite(omega_q) || !finite(omega_p) || !finite(rabi))
        throw InvalidInput("DriveConfig: fields must be finite");
    if (omega_q <= 0.0) throw InvalidInput("DriveConfig: omega_q must be > 0");
    if (rabi < 0.0) throw InvalidInput("DriveConfig: rabi must be >= 0");
}

void TransmonParams::validate() const {
    if (!finite(ej_max_hz) || !finite(ec_hz) || !finite(flux))
        throw InvalidInput("TransmonParams: fields must be finite");
    if (ej_max_hz <= 0.0 || ec_hz <= 0.0)
        throw InvalidInput("TransmonParams: ej_max and ec must be > 0");
}

void BlochVector::validate(double tol) const {
    if (!finite(s1.real()) || !finite(s1.imag()) || !finite(s2))
        throw InvalidInput("BlochVector: fields must be finite");
    if (s2 < -tol || s2 > 1.0 + tol)
        throw InvalidInput("BlochVector: s2 outside [0, 1]");
    if (std::norm(s1) > s2 * (1.0 - s2) + tol)
        throw InvalidInput("BlochVector: |s1|^2 > s2 (1 - s2)");
}

void Spectrum::validate() const {
    if (omega_grid.size() != psd.size())
        throw InvalidInput("Spectrum: grid/psd size mismatch");
    if (has_sigma() && sigma.size() != psd.size())
        throw InvalidInput("Spectrum: sigma size mismatch");
    for (std::size_t i = 0; i + 1 < omega_grid.size(); ++i)
        if (!(omega_grid[i] < omega_grid[i + 1]))
            throw InvalidInput("Spectrum: grid must be strictly increasing");
    for (double v : psd)
        if (!finite(v)) throw InvalidInput("Spectrum: psd must be finite");
}

void ComplexTrace::validate() const {
    if (t_grid.size() != values.size())
        throw InvalidInput("ComplexTrace: grid/values size mismatch");
    if (has_sigma() && sigma.size() != values.size())
        throw InvalidInput("ComplexTrace: sigma size mismatch");
    for (std::size_t i = 0; i + 1 < t_grid.size(); ++i)
        if (!(t_grid[i] < t_grid[i + 1]))
            throw InvalidInput("ComplexTrace: time grid must be strictly increasing");
}

}  // namespace ratefit
