#pragma once

#include <cmath>

namespace ratefit {

// All rates and frequencies are stored internally as angular frequencies
// (rad/s). External interfaces (CSV, JSON, CLI) use cyclic frequencies in Hz;
// these helpers live at that boundary.

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Planck constant, J s.
inline constexpr double kPlanck = 6.62607015e-34;

inline double hz_to_rad(double f_hz) { return kTwoPi * f_hz; }
inline double rad_to_hz(double w_rad) { return w_rad / kTwoPi; }

inline double dbm_to_watts(double p_dbm) { return std::pow(10.0, (p_dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double p_w) { return 10.0 * std::log10(p_w) + 30.0; }

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }

}  // namespace ratefit
