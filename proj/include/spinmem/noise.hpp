#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "spinmem/rng.hpp"

namespace spinmem {

// Ornstein-Uhlenbeck channel: stationary Gaussian noise with standard
// deviation sigma and exponential autocorrelation of time constant tau_c.
struct OUParams {
  double sigma = 0.0;  // rad/s for detuning, dimensionless for amplitude
  double tau_c = 1.0;  // seconds

  double diffusion() const { return 2.0 * sigma * sigma / tau_c; }

  void validate() const {
    if (sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
    if (tau_c <= 0.0) throw std::invalid_argument("tau_c must be > 0");
  }
};

// Stationary draw; also used for noise frozen during a pulse.
inline double sample_quasistatic(const OUParams& p, Rng& rng) {
  return p.sigma * rng.normal();
}

// Exact OU update over a step dt (no discretization error):
// x' = x e^{-dt/tau_c} + n sqrt(sigma^2 (1 - e^{-2 dt/tau_c})).
inline double ou_step(double x, double dt, const OUParams& p, Rng& rng) {
  if (dt < 0.0) throw std::invalid_argument("ou_step: dt must be >= 0");
  if (dt == 0.0) return x;
  const double e = std::exp(-dt / p.tau_c);
  const double sd = p.sigma * std::sqrt(1.0 - e * e);
  return x * e + rng.normal() * sd;
}

struct OUStepIntegral {
  double next = 0.0;      // x(t + dt)
  double integral = 0.0;  // int_t^{t+dt} x(s) ds
};

// Joint exact sample of the endpoint and the time integral of an OU segment.
// Conditional on x, (x', I) is Gaussian with
//   E[x'] = x E,                 Var(x') = s^2 (1 - E^2),
//   E[I]  = x tau (1 - E),       Var(I)  = 2 s^2 tau t - s^2 tau^2 (3 - 4E + E^2),
//   Cov(x', I) = s^2 tau (1 - E)^2,      E = e^{-t/tau}.
// Used for free evolutions so Monte Carlo phase accumulation is exact for any
// segment length, rather than relying on a fine time discretization.
inline OUStepIntegral ou_step_with_integral(double x, double dt, const OUParams& p,
                                            Rng& rng) {
  if (dt < 0.0) throw std::invalid_argument("ou_step_with_integral: dt must be >= 0");
  OUStepIntegral out;
  if (dt == 0.0) {
    out.next = x;
    return out;
  }
  const double tau = p.tau_c;
  const double s2 = p.sigma * p.sigma;
  const double e = std::exp(-dt / tau);
  const double var_x = s2 * (1.0 - e * e);
  const double cov = s2 * tau * (1.0 - e) * (1.0 - e);
  double var_i = 2.0 * s2 * tau * dt - s2 * tau * tau * (3.0 - 4.0 * e + e * e);
  if (var_i < 0.0) var_i = 0.0;  // guards roundoff for dt << tau

  const double z1 = rng.normal();
  const double z2 = rng.normal();
  const double sd_x = std::sqrt(var_x);
  out.next = x * e + sd_x * z1;
  double cond_var = var_i;
  double slope = 0.0;
  if (var_x > 0.0) {
    slope = cov / var_x;
    cond_var = var_i - cov * cov / var_x;
    if (cond_var < 0.0) cond_var = 0.0;
  }
  out.integral = x * tau * (1.0 - e) + slope * (out.next - x * e) + std::sqrt(cond_var) * z2;
  return out;
}

struct NoiseTrajectory {
  std::vector<double> times;   // strictly increasing, seconds
  std::vector<double> values;  // same units as sigma
  std::uint64_t seed = 0;
};

// Samples an OU trajectory on the given time grid starting from a stationary
// draw. Deterministic given (master_seed, index).
inline NoiseTrajectory sample_trajectory(const OUParams& p,
                                         const std::vector<double>& times,
                                         std::uint64_t master_seed,
                                         std::uint64_t index) {
  p.validate();
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw std::invalid_argument("trajectory times must be strictly increasing");
  NoiseTrajectory tr;
  tr.seed = master_seed;
  tr.times = times;
  tr.values.resize(times.size());
  Rng rng = stream_rng(master_seed, index);
  if (times.empty()) return tr;
  double x = sample_quasistatic(p, rng);
  tr.values[0] = x;
  for (std::size_t i = 1; i < times.size(); ++i) {
    x = ou_step(x, times[i] - times[i - 1], p, rng);
    tr.values[i] = x;
  }
  return tr;
}

}  // namespace spinmem
