#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "spinmem/constants.hpp"

namespace spinmem {

struct Harmonic {
  double freq = 0.0;  // Hz (cycles/s of the modulation)
  double a = 0.0;     // sin coefficient
  double b = 0.0;     // cos coefficient
};

// Truncated-Fourier shaped pulse for the amplitude and phase channels, with a
// flattop Gaussian envelope on the amplitude and a hard peak-Rabi clamp.
struct PulseShape {
  double duration = 0.0;     // s
  double rise_time = 100e-9; // s
  double clamp = from_hz(2.0e6);  // rad/s peak Rabi
  double amp_offset = 0.0;   // rad/s, constant amplitude term
  double phase_offset = 0.0; // rad
  std::vector<Harmonic> amp;
  std::vector<Harmonic> phase;

  // Gaussian-edged flattop: exactly 0 at both ends, exactly 1 on the plateau
  // [5*rise, duration - 5*rise].
  double envelope(double t) const {
    if (t <= 0.0 || t >= duration) return 0.0;
    const double r = rise_time;
    const auto edge = [r](double u) {
      if (u >= 5.0 * r) return 1.0;
      const double g = std::exp(-0.5 * (u - 5.0 * r) * (u - 5.0 * r) / (r * r));
      const double g0 = std::exp(-0.5 * 25.0);
      return std::max(0.0, (g - g0) / (1.0 - g0));
    };
    return std::min(edge(t), edge(duration - t));
  }

  double rabi_at(double t) const {
    double raw = amp_offset;
    for (const auto& h : amp)
      raw += h.a * std::sin(two_pi * h.freq * t) + h.b * std::cos(two_pi * h.freq * t);
    return std::clamp(raw * envelope(t), -clamp, clamp);
  }

  double phase_at(double t) const {
    double p = phase_offset;
    for (const auto& h : phase)
      p += h.a * std::sin(two_pi * h.freq * t) + h.b * std::cos(two_pi * h.freq * t);
    return p;
  }
};

}  // namespace spinmem
