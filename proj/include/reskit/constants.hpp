#pragma once

#include <numbers>

namespace reskit::constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// SI, exact since the 2019 redefinition.
inline constexpr double planck = 6.62607015e-34;          // J s
inline constexpr double hbar = planck / (2.0 * std::numbers::pi);
inline constexpr double boltzmann = 1.380649e-23;         // J/K
inline constexpr double elementary_charge = 1.602176634e-19;  // J per eV
inline constexpr double boltzmann_ev = boltzmann / elementary_charge;  // eV/K

// Cu K-alpha lines, nm.
inline constexpr double cu_kalpha1_nm = 0.154060;
inline constexpr double cu_kalpha2_nm = 0.154443;

} // namespace reskit::constants
