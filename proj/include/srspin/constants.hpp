#pragma once

#include <numbers>

// Physical constants in SI units (CODATA 2018) and strontium-87 data.
namespace srspin::constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline constexpr double planck = 6.62607015e-34;
inline constexpr double hbar = planck / two_pi;
inline constexpr double boltzmann = 1.380649e-23;
inline constexpr double speed_of_light = 299792458.0;
inline constexpr double vacuum_permittivity = 8.8541878128e-12;
inline constexpr double atomic_mass_unit = 1.66053906660e-27;
inline constexpr double nuclear_magneton = 5.0507837461e-27;  // J/T
inline constexpr double standard_gravity = 9.80665;

// Atomic unit of polarizability, C m^2 / V.
inline constexpr double polarizability_au = 1.64878e-41;

namespace sr87 {
inline constexpr double mass = 86.9088775 * atomic_mass_unit;
inline constexpr double nuclear_moment = -1.0936;  // nuclear magnetons
inline constexpr int twice_nuclear_spin = 9;

// Coefficient of the linear Zeeman Hamiltonian H = 2 pi g (B . F), Hz/G.
// Equals |mu_I| / (I h); positive because mu_I < 0 and H = -mu . B.
inline constexpr double larmor_coefficient_hz_per_gauss = 185.2;

// 1S0 -> 1P1 imaging transition.
inline constexpr double blue_wavelength = 461e-9;
inline constexpr double blue_linewidth = two_pi * 30.5e6;  // rad/s
}  // namespace sr87

}  // namespace srspin::constants
