#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "spinmem/linalg.hpp"
#include "spinmem/optim.hpp"
#include "spinmem/spin_model.hpp"

namespace spinmem {

// ---------------------------------------------------------------------------
// Coherence decay under OU detuning noise and N ideal, instantaneous pi pulses
// with pulse separation tau_tilde = 2*tau; signal ~ exp(-gamma).
// ---------------------------------------------------------------------------

struct DecaySpec {
  int n = 1;                 // number of pi pulses
  double tau_tilde = 0.0;    // pulse separation 2*tau, s
  double sigma_delta = 0.0;  // rad/s
  double tau_c = 1.0;        // s

  void validate() const {
    if (n < 1) throw std::invalid_argument("decay spec requires n >= 1");
    if (tau_tilde < 0.0) throw std::invalid_argument("tau_tilde must be >= 0");
    if (tau_c <= 0.0) throw std::invalid_argument("tau_c must be > 0");
  }
};

namespace detail {

// 1 - tanh(x)/x and 1 - sech(x), series-expanded for small x to avoid the
// catastrophic cancellation that otherwise dominates in the tau_c >> tau regime.
inline double one_minus_tanh_over_x(double x) {
  if (std::fabs(x) < 0.05) {
    const double x2 = x * x;
    return x2 * (1.0 / 3.0 + x2 * (-2.0 / 15.0 + x2 * (17.0 / 315.0 - x2 * 62.0 / 2835.0)));
  }
  return 1.0 - std::tanh(x) / x;
}

inline double one_minus_sech(double x) {
  if (std::fabs(x) < 0.05) {
    const double x2 = x * x;
    return x2 * (0.5 + x2 * (-5.0 / 24.0 + x2 * (61.0 / 720.0 - x2 * 277.0 / 8064.0)));
  }
  return 1.0 - 1.0 / std::cosh(x);
}

}  // namespace detail

inline double decay_rate_exact(const DecaySpec& s) {
  s.validate();
  if (s.tau_tilde == 0.0) return 0.0;
  const double t = s.n * s.tau_tilde;
  const double x = 0.5 * s.tau_tilde / s.tau_c;
  const double sgn = (s.n % 2 == 0) ? -1.0 : 1.0;  // (-1)^(N+1)
  const double sech_term = detail::one_minus_sech(x);
  const double bracket = -(sgn * std::exp(-t / s.tau_c) + 1.0) * sech_term * sech_term +
                         (t / s.tau_c) * detail::one_minus_tanh_over_x(x);
  return s.sigma_delta * s.sigma_delta * s.tau_c * s.tau_c * bracket;
}

// Overload with the total evolution time made explicit; requires t = N*tau_tilde.
inline double decay_rate_exact(const DecaySpec& s, double t) {
  if (std::fabs(t - s.n * s.tau_tilde) > 1e-9 * std::max(1.0, std::fabs(t)))
    throw std::invalid_argument("decay_rate_exact requires t = N * tau_tilde");
  return decay_rate_exact(s);
}

// tau_c >> tau limit: gamma = sigma^2 N tau_tilde^3 / (12 tau_c).
inline double decay_rate_approx(const DecaySpec& s) {
  s.validate();
  return s.sigma_delta * s.sigma_delta * s.n * s.tau_tilde * s.tau_tilde * s.tau_tilde /
         (12.0 * s.tau_c);
}

// T2(N) = T2_Hahn * N^(2/3).
inline double t2_for_order(int n, double t2_hahn) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (t2_hahn <= 0.0) throw std::invalid_argument("t2_hahn must be > 0");
  return t2_hahn * std::pow(static_cast<double>(n), 2.0 / 3.0);
}

// Coherence time from gamma(N, T2) = 1 for a fixed-N pulse-separation sweep.
// The approximate form has the closed solution (12 N^2 tau_c / sigma^2)^(1/3);
// the exact form is obtained by bisection around it.
inline double t2_from_noise(int n, double sigma_delta, double tau_c, bool exact = true) {
  if (sigma_delta <= 0.0) throw std::invalid_argument("sigma_delta must be > 0");
  const double approx = std::cbrt(12.0 * n * n * tau_c / (sigma_delta * sigma_delta));
  if (!exact) return approx;
  DecaySpec s{n, 0.0, sigma_delta, tau_c};
  double lo = approx / (8 * n), hi = approx * 8;
  const auto g = [&](double t2) {
    s.tau_tilde = t2 / n;
    return decay_rate_exact(s) - 1.0;
  };
  if (g(lo) > 0.0 || g(hi) < 0.0) throw std::runtime_error("t2 bracket failed");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Memory-time limit for a fixed pulse separation: T = (T2H/tau)^2 * T2H,
// optionally combined with electron relaxation via 1/T' = 1/(2 T1e) + 1/T.
inline double memory_time(double tau_tilde, double t2_hahn, double t1e = 0.0) {
  if (tau_tilde <= 0.0) throw std::invalid_argument("tau_tilde must be > 0");
  if (t2_hahn <= 0.0) throw std::invalid_argument("t2_hahn must be > 0");
  const double r = t2_hahn / tau_tilde;
  const double t_mem = r * r * t2_hahn;
  if (t1e <= 0.0) return t_mem;
  return 1.0 / (1.0 / (2.0 * t1e) + 1.0 / t_mem);
}

// ---------------------------------------------------------------------------
// Decay-time fitting: y = a * exp(-(t/T2)^p) + c with fixed exponent p.
// T2 is where the fitted envelope has dropped by 1/e.
// ---------------------------------------------------------------------------

struct DecayEstimate {
  double t2 = 0.0;
  double uncertainty = 0.0;
  enum class Model { exact, approx, fit } model = Model::fit;
  bool unbounded = false;  // flagged when the data shows no resolvable decay
};

inline DecayEstimate fit_decay_time(const std::vector<double>& t,
                                    const std::vector<double>& y, double p = 3.0,
                                    bool fit_offset = false) {
  if (t.size() != y.size() || t.size() < 4)
    throw std::invalid_argument("need at least 4 (t, y) samples");
  double ymin = y[0], ymax = y[0], tmax = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    ymin = std::min(ymin, y[i]);
    ymax = std::max(ymax, y[i]);
    tmax = std::max(tmax, t[i]);
  }
  const double a0 = std::max(ymax - (fit_offset ? ymin : 0.0), 1e-6);
  const double c0 = fit_offset ? ymin : 0.0;
  // crude 1/e crossing for the initial T2
  double t2_0 = tmax;
  const double target = c0 + a0 / std::numbers::e;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (y[i] <= target && t[i] > 0.0) {
      t2_0 = t[i];
      break;
    }
  }

  const int np = fit_offset ? 3 : 2;
  const auto residual = [&](const Eigen::VectorXd& prm) {
    const double a = prm(0);
    const double t2 = std::exp(prm(1));  // log-parameterized, keeps T2 > 0
    const double c = fit_offset ? prm(2) : 0.0;
    Eigen::VectorXd r(static_cast<long>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i)
      r(static_cast<long>(i)) = a * std::exp(-std::pow(t[i] / t2, p)) + c - y[i];
    return r;
  };
  Eigen::VectorXd x0(np);
  x0(0) = a0;
  x0(1) = std::log(t2_0);
  if (fit_offset) x0(2) = c0;
  const LmResult lm = levenberg_marquardt(residual, x0);
  if (!lm.converged) throw std::runtime_error("decay fit did not converge");

  DecayEstimate est;
  est.t2 = std::exp(lm.params(1));
  est.uncertainty = est.t2 * std::sqrt(std::max(0.0, lm.covariance(1, 1)));
  est.model = DecayEstimate::Model::fit;
  // A T2 far beyond the sampled window (or with unbounded error) means the
  // signal is consistent with no decay.
  if (est.t2 > 50.0 * tmax || !std::isfinite(est.uncertainty) ||
      est.uncertainty > 10.0 * est.t2)
    est.unbounded = true;
  return est;
}

// ---------------------------------------------------------------------------
// Correlation-time fitting: joint nonlinear least squares of
// y = exp(-decay_rate_exact(N, tau_tilde; sigma, tau_c)) over one or more
// fixed-N datasets, with a 95% confidence interval from the linearized
// parameter covariance.
// ---------------------------------------------------------------------------

struct CpmgDataset {
  int n = 1;
  std::vector<double> tau_tilde;
  std::vector<double> signal;
};

struct TauCEstimate {
  double tau_c = 0.0;
  double stderr_ = 0.0;
  double ci95_low = 0.0;
  double ci95_high = 0.0;
  double rss = 0.0;
};

// Two-sided 97.5% Student-t quantile for the confidence interval.
inline double t_quantile_975(long dof) {
  static constexpr double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447,
                                     2.365,  2.306, 2.262, 2.228, 2.201, 2.179,
                                     2.160,  2.145, 2.131, 2.120, 2.110, 2.101,
                                     2.093,  2.086, 2.080, 2.074, 2.069, 2.064,
                                     2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
  if (dof < 1) return 12.706;
  if (dof <= 30) return table[dof - 1];
  return 1.96 * (1.0 + 1.21 / static_cast<double>(dof));
}

inline TauCEstimate fit_correlation_time(const std::vector<CpmgDataset>& datasets,
                                         double sigma_delta, double tau_c_guess = 100.0) {
  std::size_t total = 0;
  for (const auto& d : datasets) {
    if (d.tau_tilde.size() != d.signal.size())
      throw std::invalid_argument("dataset size mismatch");
    total += d.tau_tilde.size();
  }
  if (total < 4) throw std::invalid_argument("need at least 4 points to fit tau_c");

  const auto residual = [&](const Eigen::VectorXd& prm) {
    const double tau_c = std::exp(prm(0));
    Eigen::VectorXd r(static_cast<long>(total));
    long i = 0;
    for (const auto& d : datasets) {
      DecaySpec s{d.n, 0.0, sigma_delta, tau_c};
      for (std::size_t k = 0; k < d.tau_tilde.size(); ++k) {
        s.tau_tilde = d.tau_tilde[k];
        r(i++) = std::exp(-decay_rate_exact(s)) - d.signal[k];
      }
    }
    return r;
  };
  Eigen::VectorXd x0(1);
  x0(0) = std::log(tau_c_guess);
  const LmResult lm = levenberg_marquardt(residual, x0);
  if (!lm.converged) throw std::runtime_error("tau_c fit did not converge");

  TauCEstimate est;
  est.tau_c = std::exp(lm.params(0));
  const double se_log = std::sqrt(std::max(0.0, lm.covariance(0, 0)));
  const double q = t_quantile_975(static_cast<long>(total) - 1);
  est.stderr_ = est.tau_c * se_log;
  est.ci95_low = est.tau_c * std::exp(-q * se_log);
  est.ci95_high = est.tau_c * std::exp(q * se_log);
  est.rss = lm.rss;
  return est;
}

// ---------------------------------------------------------------------------
// Pulse fidelities
// ---------------------------------------------------------------------------

// Global-phase-invariant gate fidelity F = |Tr(U_ideal^dag U_actual)| / 2.
inline double pulse_fidelity(const Mat2& u_actual, const Mat2& u_ideal) {
  return 0.5 * std::abs((u_ideal.adjoint() * u_actual).trace());
}

enum class FidelitySequence { pi_half, pi, cpmg8, xy8 };

// Propagator of a pulse or DD block with constant (frozen) detuning and
// relative amplitude errors. DD sequences place pi-pulse centers spacing
// apart; free evolution carries the detuning phase.
inline Mat2 sequence_propagator(FidelitySequence kind, double delta, double eps,
                                double rabi, double spacing) {
  const double t_pi = pi / rabi;
  const auto pulse = [&](double area, double phase) {
    const Mat2 h = hamiltonian_reduced(delta, rabi, eps, phase);
    return expm_i(h, area / rabi);
  };
  const auto free_ev = [&](double duration) {
    return expm_i(Mat2(delta * sz2()), duration);
  };
  switch (kind) {
    case FidelitySequence::pi_half:
      return pulse(pi / 2.0, 0.0);
    case FidelitySequence::pi:
      return pulse(pi, 0.0);
    case FidelitySequence::cpmg8:
    case FidelitySequence::xy8: {
      if (spacing <= t_pi) throw std::invalid_argument("spacing must exceed t_pi");
      std::vector<double> phases(8, pi / 2.0);  // CPMG pulses along y
      if (kind == FidelitySequence::xy8) {
        static constexpr double x = 0.0, y = pi / 2.0;
        phases = {x, y, x, y, y, x, y, x};
      }
      const double gap = spacing - t_pi;
      Mat2 u = free_ev(0.5 * gap);
      for (int k = 0; k < 8; ++k) {
        u = pulse(pi, phases[static_cast<std::size_t>(k)]) * u;
        u = free_ev(k == 7 ? 0.5 * gap : gap) * u;
      }
      return u;
    }
  }
  throw std::invalid_argument("unknown fidelity sequence");
}

inline Mat2 ideal_sequence_propagator(FidelitySequence kind, double rabi,
                                      double spacing) {
  return sequence_propagator(kind, 0.0, 0.0, rabi, spacing);
}

struct FidelityMap {
  std::vector<double> delta;  // rad/s
  std::vector<double> eps;
  std::vector<double> f;  // row-major, f[i_delta * eps.size() + j_eps]

  double at(std::size_t i, std::size_t j) const { return f[i * eps.size() + j]; }
};

inline FidelityMap fidelity_map(FidelitySequence kind, const std::vector<double>& deltas,
                                const std::vector<double>& epsilons, double rabi,
                                double spacing, int threads = 0) {
  FidelityMap map;
  map.delta = deltas;
  map.eps = epsilons;
  map.f.resize(deltas.size() * epsilons.size());
  const Mat2 u_ideal = ideal_sequence_propagator(kind, rabi, spacing);
  parallel_for(
      map.f.size(),
      [&](std::size_t idx) {
        const std::size_t i = idx / epsilons.size();
        const std::size_t j = idx % epsilons.size();
        const Mat2 u = sequence_propagator(kind, deltas[i], epsilons[j], rabi, spacing);
        map.f[idx] = pulse_fidelity(u, u_ideal);
      },
      threads);
  return map;
}

}  // namespace spinmem
