#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "spinmem/linalg.hpp"
#include "spinmem/noise.hpp"
#include "spinmem/optim.hpp"
#include "spinmem/parallel.hpp"
#include "spinmem/pulse_shape.hpp"
#include "spinmem/rng.hpp"
#include "spinmem/spin_model.hpp"

namespace spinmem {

// dCRAB-style optimization of a shaped MW pulse that polarizes the nuclear
// spin along the down-electron quantization axis in a single pulse. The
// carrier sits on the label-flipping diagonal (the v2 pumping line), and the
// figure of merit counts population outside span{v2, v2'}.

// The optimization averages over one frozen pool of quasi-static noise draws.
// The channel is selectable: relative drive-amplitude errors (the pulse-error
// model used for the DD sequences) or an electron detuning offset.
enum class PulseNoiseChannel { amplitude, detuning };

struct DcrabSettings {
  int super_iterations = 10;
  int evals_per_super_iteration = 1000;
  int harmonics_per_channel = 2;  // random basis frequencies drawn per channel
  int principal_harmonics = 10;   // basis frequencies uniform in [0, K/duration]
  int optimization_pool = 100;    // noise realizations frozen during the search
  int evaluation_pool = 5000;     // realizations for the final re-evaluation
  double segment_dt = 5e-9;       // piecewise-constant propagation step
  double clamp = from_hz(2.0e6);  // peak Rabi limit
  double rise_time = 100e-9;
  PulseNoiseChannel noise_channel = PulseNoiseChannel::amplitude;
  std::uint64_t seed = 1;
  int threads = 0;

  void validate() const {
    if (super_iterations < 1 || evals_per_super_iteration < 1 ||
        harmonics_per_channel < 1 || optimization_pool < 1 || evaluation_pool < 1)
      throw std::invalid_argument("dCRAB counts must be >= 1");
    if (segment_dt <= 0.0) throw std::invalid_argument("segment_dt must be > 0");
  }
};

struct FoMRecord {
  double value = 1.0;
  long evaluation = 0;
  int super_iteration = 0;
};

struct DcrabResult {
  PulseShape pulse;
  double fom_optimization_pool = 1.0;
  double fom_evaluation_pool = 1.0;
  std::vector<FoMRecord> history;  // incumbent improvements, non-increasing
  long evaluations = 0;
};

// Polarization infidelity: 1 - <v2|rho|v2> - <v2'|rho|v2'>.
inline double polarization_fom(const Density4& rho, const ManifoldSpectrum& ms) {
  return 1.0 - overlap(rho, ms.v2) - overlap(rho, ms.v2f);
}

// Propagates |down_e><down_e| (x) 1/2 through the shaped pulse in the frame
// rotating at the pump carrier, with constant detuning and relative amplitude
// errors frozen over the pulse.
inline Density4 propagate_shaped_pulse(const SpinSystemParams& sys,
                                       const ManifoldSpectrum& ms,
                                       const PulseShape& pulse, double delta_e,
                                       double segment_dt, double amp_error = 0.0) {
  const double frame_detuning = -ms.mw_offset_pump_v2 + delta_e;
  const Mat4 h0 = hamiltonian_full(sys, std::nullopt, frame_detuning);
  const Mat4 sx = Sx4(), sy = Sy4();

  Density4 rho;
  rho.m = kron((Mat2() << 0, 0, 0, 1).finished(), 0.5 * Mat2::Identity());
  const int n_seg = std::max(1, static_cast<int>(std::ceil(pulse.duration / segment_dt)));
  const double dt = pulse.duration / n_seg;
  for (int k = 0; k < n_seg; ++k) {
    const double tm = (k + 0.5) * dt;
    const double omega = pulse.rabi_at(tm) * (1.0 + amp_error);
    const double phi = pulse.phase_at(tm);
    Mat4 h = h0;
    if (omega != 0.0) h += omega * (std::cos(phi) * sx + std::sin(phi) * sy);
    const Mat4 u = expm_i(h, dt);
    rho.m = u * rho.m * u.adjoint();
  }
  return rho;
}

// Mean FoM over a pool of quasi-static draws on the selected channel.
inline double fom_over_pool(const SpinSystemParams& sys, const ManifoldSpectrum& ms,
                            const PulseShape& pulse, const std::vector<double>& pool,
                            double segment_dt, int threads = 0,
                            PulseNoiseChannel channel = PulseNoiseChannel::detuning) {
  std::vector<double> vals(pool.size());
  parallel_for(
      pool.size(),
      [&](std::size_t i) {
        const double delta = channel == PulseNoiseChannel::detuning ? pool[i] : 0.0;
        const double eps = channel == PulseNoiseChannel::amplitude ? pool[i] : 0.0;
        const Density4 rho =
            propagate_shaped_pulse(sys, ms, pulse, delta, segment_dt, eps);
        vals[i] = polarization_fom(rho, ms);
      },
      threads);
  return pairwise_mean(vals);
}

inline DcrabResult dcrab_optimize(const SpinSystemParams& sys, double duration,
                                  const DcrabSettings& settings, const OUParams& noise,
                                  const PulseShape* warm_start = nullptr) {
  settings.validate();
  noise.validate();
  if (duration <= 2.0 * settings.rise_time)
    throw std::invalid_argument("duration must exceed twice the rise time");
  // RWA sanity: the drive must stay far below the carrier frequency.
  const ManifoldSpectrum ms = manifold_spectrum(sys);
  const double carrier = sys.gamma_e_eff * sys.b_z + ms.mw_offset_pump_v2;
  if (settings.clamp > 0.01 * carrier)
    throw std::invalid_argument("peak Rabi clamp violates the rotating-wave regime");

  const auto make_pool = [&](int count, std::uint64_t salt) {
    std::vector<double> pool(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      Rng rng = stream_rng(settings.seed, salt, static_cast<std::uint64_t>(i));
      pool[static_cast<std::size_t>(i)] = sample_quasistatic(noise, rng);
    }
    return pool;
  };
  const std::vector<double> opt_pool = make_pool(settings.optimization_pool, 0xa11);
  const std::vector<double> eval_pool = make_pool(settings.evaluation_pool, 0xb22);

  DcrabResult result;
  if (warm_start != nullptr) {
    result.pulse = *warm_start;
    result.pulse.duration = duration;
    result.pulse.clamp = settings.clamp;
  } else {
    result.pulse.duration = duration;
    result.pulse.rise_time = settings.rise_time;
    result.pulse.clamp = settings.clamp;
    // Seed the search at the resonant pi-area flat pulse on the weak transition.
    const int n_env = 2048;
    double area = 0.0;
    for (int k = 0; k < n_env; ++k)
      area += result.pulse.envelope((k + 0.5) * duration / n_env) * duration / n_env;
    if (area > 0.0)
      result.pulse.amp_offset = std::min(pi / (ms.weak_overlap * area), settings.clamp);
  }

  double incumbent_fom =
      fom_over_pool(sys, ms, result.pulse, opt_pool, settings.segment_dt,
                    settings.threads, settings.noise_channel);
  ++result.evaluations;
  result.history.push_back({incumbent_fom, result.evaluations, 0});

  Rng basis_rng = stream_rng(settings.seed, 0xc33);
  const int nh = settings.harmonics_per_channel;
  const double f_max = settings.principal_harmonics / duration;

  for (int si = 1; si <= settings.super_iterations; ++si) {
    std::vector<double> amp_freqs(static_cast<std::size_t>(nh)),
        phase_freqs(static_cast<std::size_t>(nh));
    for (auto& f : amp_freqs) f = f_max * basis_rng.uniform();
    for (auto& f : phase_freqs) f = f_max * basis_rng.uniform();

    // Per harmonic the search sees (frequency shift, sin coeff, cos coeff);
    // letting the frequencies move is what allows the search to lock onto the
    // narrow sidebands (widths ~ 1/duration) that this transfer needs.
    const auto candidate = [&](const Eigen::VectorXd& x) {
      PulseShape p = result.pulse;
      p.amp_offset += x(0);
      for (int h = 0; h < nh; ++h)
        p.amp.push_back({std::fabs(amp_freqs[static_cast<std::size_t>(h)] + x(1 + 3 * h)),
                         x(2 + 3 * h), x(3 + 3 * h)});
      const int base = 1 + 3 * nh;
      for (int h = 0; h < nh; ++h)
        p.phase.push_back(
            {std::fabs(phase_freqs[static_cast<std::size_t>(h)] + x(base + 3 * h)),
             x(base + 1 + 3 * h), x(base + 2 + 3 * h)});
      return p;
    };
    const auto objective = [&](const Eigen::VectorXd& x) {
      ++result.evaluations;
      return fom_over_pool(sys, ms, candidate(x), opt_pool, settings.segment_dt,
                           settings.threads, settings.noise_channel);
    };

    const int dim = 1 + 6 * nh;
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd scale(dim);
    // Search scales shrink with the incumbent FoM so late super-iterations
    // refine rather than kick the pulse out of the basin.
    const double shrink = std::sqrt(incumbent_fom / 0.5);
    scale(0) = settings.clamp / 8.0 * shrink;
    for (int h = 0; h < nh; ++h) {
      scale(1 + 3 * h) = f_max / 15.0;
      scale(2 + 3 * h) = scale(3 + 3 * h) = settings.clamp / 8.0 * shrink;
    }
    const int base = 1 + 3 * nh;
    for (int h = 0; h < nh; ++h) {
      scale(base + 3 * h) = f_max / 15.0;
      scale(base + 1 + 3 * h) = scale(base + 2 + 3 * h) = 1.5 * shrink;
    }
    NmSettings nm;
    nm.max_evals = settings.evals_per_super_iteration;
    nm.f_tol = 1e-10;
    nm.x_tol = 1e-11;
    nm.max_restarts = 3;
    const NmResult best = nelder_mead(objective, x0, scale, nm);

    if (best.value < incumbent_fom) {
      result.pulse = candidate(best.x);
      incumbent_fom = best.value;
    }
    result.history.push_back({incumbent_fom, result.evaluations, si});
  }

  result.fom_optimization_pool = incumbent_fom;
  result.fom_evaluation_pool =
      fom_over_pool(sys, ms, result.pulse, eval_pool, settings.segment_dt,
                    settings.threads, settings.noise_channel);
  return result;
}

}  // namespace spinmem
