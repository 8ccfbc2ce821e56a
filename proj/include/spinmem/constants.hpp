#pragma once

#include <numbers>

namespace spinmem {

inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double pi = std::numbers::pi;

// Angular frequency from a value in cycles/s. All internal frequencies are rad/s.
inline constexpr double from_hz(double hz) { return two_pi * hz; }
inline constexpr double to_hz(double rad_per_s) { return rad_per_s / two_pi; }

// Tabulated 13C gyromagnetic ratio, rad/s per tesla.
inline constexpr double gamma_n_c13 = two_pi * 10.7084e6;

namespace tol {
inline constexpr double trace = 1e-12;
inline constexpr double hermitian = 1e-12;
inline constexpr double unitary = 1e-10;
inline constexpr double psd = 1e-10;
inline constexpr double state_norm = 1e-9;
}  // namespace tol

}  // namespace spinmem
