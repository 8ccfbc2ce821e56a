#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinmem/linalg.hpp"
#include "spinmem/noise.hpp"
#include "spinmem/parallel.hpp"
#include "spinmem/pulse_shape.hpp"
#include "spinmem/rng.hpp"
#include "spinmem/spin_model.hpp"

namespace spinmem {

// ---------------------------------------------------------------------------
// Sequence intermediate representation
// ---------------------------------------------------------------------------

enum class ElementKind { mw_pulse, rf_pulse, shaped_pulse, wait, laser_reset };
enum class SequenceModel { full4, reduced2 };
enum class PulseMode { instantaneous, finite };
enum class ReadoutKind { differential_x, flip_probability, eigenstate_population };

struct SequenceElement {
  ElementKind kind = ElementKind::wait;
  double duration = 0.0;  // s
  DriveParams drive{};
  double nominal_area = 0.0;         // rad, ideal rotation angle (instantaneous mode)
  bool alternating_readout = false;  // final pi/2 read out with phase +-x
  ElectronState reset_target = ElectronState::down;
  bool dephase_nuclear = true;
  int shape_index = -1;
};

struct PulseSequence {
  SequenceModel model = SequenceModel::reduced2;
  ReadoutKind readout = ReadoutKind::differential_x;
  PulseMode mode = PulseMode::finite;
  double static_detuning = 0.0;  // deliberate frame detuning, rad/s (reduced model)
  std::vector<SequenceElement> elements;
  std::vector<PulseShape> shapes;
  Vec4 readout_state = Vec4::Zero();  // eigenstate_population readout (full model)

  double total_duration() const {
    double t = 0.0;
    for (const auto& e : elements) t += e.duration;
    return t;
  }

  double rf_on_time() const {
    double t = 0.0;
    for (const auto& e : elements)
      if (e.kind == ElementKind::rf_pulse) t += e.duration;
    return t;
  }

  void validate() const {
    for (const auto& e : elements) {
      if (e.duration < 0.0) throw std::invalid_argument("element duration must be >= 0");
      if (model == SequenceModel::reduced2 &&
          (e.kind == ElementKind::mw_pulse || e.kind == ElementKind::laser_reset ||
           e.kind == ElementKind::shaped_pulse))
        throw std::invalid_argument("reduced model admits only RF pulses and waits");
      if (model == SequenceModel::full4 && e.kind == ElementKind::rf_pulse)
        throw std::invalid_argument(
            "direct RF drive is simulated in the reduced model only");
    }
  }
};

// Fraction of the total sequence duration with RF power on.
inline double duty_cycle(const PulseSequence& seq) {
  const double total = seq.total_duration();
  if (total <= 0.0) return 0.0;
  return seq.rf_on_time() / total;
}

// ---------------------------------------------------------------------------
// Canonical builders. DD sequences use the reduced nuclear-qubit model:
// pi/2|x - [tau - pi - tau]*N - pi/2|+-x with pulse separation 2*tau.
// ---------------------------------------------------------------------------

namespace detail {

inline SequenceElement rf_pulse(double area, double phase, double rabi, PulseMode mode) {
  SequenceElement e;
  e.kind = ElementKind::rf_pulse;
  e.nominal_area = area;
  e.drive.channel = DriveChannel::rf;
  e.drive.rabi = rabi;
  e.drive.phase = phase;
  e.duration = (mode == PulseMode::finite && rabi > 0.0) ? area / rabi : 0.0;
  return e;
}

inline SequenceElement wait_el(double duration) {
  SequenceElement e;
  e.kind = ElementKind::wait;
  e.duration = duration;
  return e;
}

}  // namespace detail

inline PulseSequence build_rabi(double drive_time, double rabi) {
  PulseSequence seq;
  seq.model = SequenceModel::reduced2;
  seq.readout = ReadoutKind::flip_probability;
  seq.mode = PulseMode::finite;
  SequenceElement e = detail::rf_pulse(rabi * drive_time, 0.0, rabi, PulseMode::finite);
  e.duration = drive_time;
  seq.elements.push_back(e);
  return seq;
}

inline PulseSequence build_ramsey(double free_time, double rabi, PulseMode mode,
                                  double static_detuning = 0.0) {
  PulseSequence seq;
  seq.model = SequenceModel::reduced2;
  seq.readout = ReadoutKind::differential_x;
  seq.mode = mode;
  seq.static_detuning = static_detuning;
  seq.elements.push_back(detail::rf_pulse(pi / 2.0, 0.0, rabi, mode));
  seq.elements.push_back(detail::wait_el(free_time));
  SequenceElement last = detail::rf_pulse(pi / 2.0, 0.0, rabi, mode);
  last.alternating_readout = true;
  seq.elements.push_back(last);
  return seq;
}

inline PulseSequence build_cpmg(int n, double tau, double rabi, PulseMode mode) {
  if (n < 1) throw std::invalid_argument("CPMG requires n >= 1");
  PulseSequence seq;
  seq.model = SequenceModel::reduced2;
  seq.readout = ReadoutKind::differential_x;
  seq.mode = mode;
  seq.elements.push_back(detail::rf_pulse(pi / 2.0, 0.0, rabi, mode));
  for (int k = 0; k < n; ++k) {
    seq.elements.push_back(detail::wait_el(tau));
    seq.elements.push_back(detail::rf_pulse(pi, pi / 2.0, rabi, mode));  // pi|y
    seq.elements.push_back(detail::wait_el(tau));
  }
  SequenceElement last = detail::rf_pulse(pi / 2.0, 0.0, rabi, mode);
  last.alternating_readout = true;
  seq.elements.push_back(last);
  return seq;
}

inline PulseSequence build_hahn(double tau, double rabi, PulseMode mode) {
  return build_cpmg(1, tau, rabi, mode);
}

inline std::vector<double> xy8_phases(int n_pulses) {
  if (n_pulses < 8 || n_pulses % 8 != 0)
    throw std::invalid_argument("XY8 pulse count must be a positive multiple of 8");
  static constexpr double x = 0.0, y = pi / 2.0;
  static constexpr double block[8] = {x, y, x, y, y, x, y, x};
  std::vector<double> phases(static_cast<std::size_t>(n_pulses));
  for (int k = 0; k < n_pulses; ++k) phases[static_cast<std::size_t>(k)] = block[k % 8];
  return phases;
}

inline PulseSequence build_xy8(int n_pulses, double tau, double rabi, PulseMode mode) {
  const auto phases = xy8_phases(n_pulses);
  PulseSequence seq;
  seq.model = SequenceModel::reduced2;
  seq.readout = ReadoutKind::differential_x;
  seq.mode = mode;
  seq.elements.push_back(detail::rf_pulse(pi / 2.0, 0.0, rabi, mode));
  for (double ph : phases) {
    seq.elements.push_back(detail::wait_el(tau));
    seq.elements.push_back(detail::rf_pulse(pi, ph, rabi, mode));
    seq.elements.push_back(detail::wait_el(tau));
  }
  SequenceElement last = detail::rf_pulse(pi / 2.0, 0.0, rabi, mode);
  last.alternating_readout = true;
  seq.elements.push_back(last);
  return seq;
}

enum class PumpTarget { v1, v2 };

// Spin pumping: repeated [narrow-band MW pi - laser reset] in the down-electron
// manifold. The MW carrier sits on the label-flipping diagonal that drains the
// non-target eigenstate, so population accumulates in the dark state (v1 or v2).
inline PulseSequence build_spin_pumping(int n, double t_pi, PumpTarget target,
                                        const ManifoldSpectrum& ms) {
  if (n < 0) throw std::invalid_argument("spin pumping requires n >= 0");
  if (t_pi <= 0.0) throw std::invalid_argument("t_pi must be > 0");
  PulseSequence seq;
  seq.model = SequenceModel::full4;
  seq.readout = ReadoutKind::eigenstate_population;
  seq.mode = PulseMode::finite;
  seq.readout_state = (target == PumpTarget::v2) ? ms.v2 : ms.v1;
  const double carrier_offset =
      (target == PumpTarget::v2) ? ms.mw_offset_pump_v2 : ms.mw_offset_pump_v1;
  for (int k = 0; k < n; ++k) {
    SequenceElement p;
    p.kind = ElementKind::mw_pulse;
    p.duration = t_pi;
    p.drive.channel = DriveChannel::mw;
    p.drive.rabi = pi / t_pi;
    p.drive.detuning = -carrier_offset;  // rotating-frame detuning at this carrier
    seq.elements.push_back(p);
    SequenceElement reset;
    reset.kind = ElementKind::laser_reset;
    reset.duration = 5.5e-3;
    reset.reset_target = ElectronState::down;
    reset.dephase_nuclear = true;
    seq.elements.push_back(reset);
  }
  return seq;
}

// Projection-SWAP: CnNOTe (narrow-band MW pi) - CeNOTn (RF pi) - CnNOTe.
// Built for structural and duty-cycle accounting; the RF leg is simulated only
// in the reduced model, matching the engine split.
inline PulseSequence build_projection_swap(const ManifoldSpectrum& ms, double mw_rabi,
                                           double rf_rabi) {
  if (mw_rabi <= 0.0 || rf_rabi <= 0.0)
    throw std::invalid_argument("Rabi frequencies must be > 0");
  PulseSequence seq;
  seq.model = SequenceModel::full4;
  seq.readout = ReadoutKind::eigenstate_population;
  seq.readout_state = ms.v2;
  SequenceElement cnnote;
  cnnote.kind = ElementKind::mw_pulse;
  cnnote.duration = pi / mw_rabi;
  cnnote.drive.channel = DriveChannel::mw;
  cnnote.drive.rabi = mw_rabi;
  cnnote.drive.detuning = -ms.mw_offset_strong_up;
  SequenceElement cenotn;
  cenotn.kind = ElementKind::rf_pulse;
  cenotn.duration = pi / rf_rabi;
  cenotn.drive.channel = DriveChannel::rf;
  cenotn.drive.rabi = rf_rabi;
  seq.elements = {cnnote, cenotn, cnnote};
  return seq;
}

// One pulsed-ODMR unit: a narrow-band MW pi pulse at a fixed rotating-frame
// detuning followed by the laser reset with nuclear dephasing.
inline PulseSequence build_odmr_step(double mw_rabi, double detuning,
                                     ElectronState manifold,
                                     const ManifoldSpectrum& ms) {
  if (mw_rabi <= 0.0) throw std::invalid_argument("mw_rabi must be > 0");
  PulseSequence seq;
  seq.model = SequenceModel::full4;
  seq.readout = ReadoutKind::eigenstate_population;
  seq.readout_state = manifold == ElectronState::up ? ms.v4 : ms.v2;
  SequenceElement p;
  p.kind = ElementKind::mw_pulse;
  p.duration = pi / mw_rabi;
  p.drive.channel = DriveChannel::mw;
  p.drive.rabi = mw_rabi;
  p.drive.detuning = detuning;
  SequenceElement reset;
  reset.kind = ElementKind::laser_reset;
  reset.duration = 5.5e-3;
  reset.reset_target = manifold;
  reset.dephase_nuclear = true;
  seq.elements = {p, reset};
  return seq;
}

enum class SequenceKind {
  rabi,
  ramsey,
  hahn,
  cpmg,
  xy8,
  spin_pumping,
  projection_swap,
  odmr_step
};

struct SequenceRequest {
  SequenceKind kind = SequenceKind::hahn;
  int n = 1;                // CPMG order / XY8 pulse count / pump repetitions
  double tau = 0.0;         // free-evolution segment, s
  double rabi = 0.0;        // rad/s
  double drive_time = 0.0;  // Rabi experiment
  double t_pi = 1.4e-6;     // pumping MW pi duration
  PulseMode mode = PulseMode::finite;
  double static_detuning = 0.0;
  PumpTarget pump_target = PumpTarget::v2;
  double rf_rabi = 0.0;                            // projection-SWAP
  ElectronState manifold = ElectronState::down;    // ODMR step
};

inline PulseSequence build_sequence(const SequenceRequest& r,
                                    const ManifoldSpectrum& ms) {
  switch (r.kind) {
    case SequenceKind::rabi:
      return build_rabi(r.drive_time, r.rabi);
    case SequenceKind::ramsey:
      return build_ramsey(r.tau, r.rabi, r.mode, r.static_detuning);
    case SequenceKind::hahn:
      return build_hahn(r.tau, r.rabi, r.mode);
    case SequenceKind::cpmg:
      return build_cpmg(r.n, r.tau, r.rabi, r.mode);
    case SequenceKind::xy8:
      return build_xy8(r.n, r.tau, r.rabi, r.mode);
    case SequenceKind::spin_pumping:
      return build_spin_pumping(r.n, r.t_pi, r.pump_target, ms);
    case SequenceKind::projection_swap:
      return build_projection_swap(ms, r.rabi, r.rf_rabi);
    case SequenceKind::odmr_step:
      return build_odmr_step(r.rabi, r.static_detuning, r.manifold, ms);
  }
  throw std::invalid_argument("unknown sequence kind");
}

// ---------------------------------------------------------------------------
// Monte Carlo engines
// ---------------------------------------------------------------------------

struct NoiseChannels {
  OUParams delta;    // detuning channel, rad/s
  OUParams epsilon;  // relative Rabi amplitude channel, dimensionless
};

struct SimulationResult {
  std::vector<double> sweep;
  std::vector<double> mean;
  std::vector<double> stderr_;
  int n_traj = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline Mat2 z_phase_unitary(double phase) {
  Mat2 u = Mat2::Zero();
  u(0, 0) = std::exp(-ci * 0.5 * phase);
  u(1, 1) = std::exp(ci * 0.5 * phase);
  return u;
}

inline Mat2 ideal_rotation(double area, double phase) {
  return expm_i(Mat2(area * (std::cos(phase) * sx2() + std::sin(phase) * sy2())), 1.0);
}

inline double p_up(const Mat2& rho) { return std::real(rho(0, 0)); }

// One noise trajectory of a reduced-model sequence; returns the readout value.
inline double run_reduced_once(const PulseSequence& seq, const NoiseChannels& noise,
                               Rng& rng) {
  double delta = sample_quasistatic(noise.delta, rng);
  double eps = sample_quasistatic(noise.epsilon, rng);
  Mat2 rho = Mat2::Zero();
  rho(1, 1) = 1.0;  // |down>

  for (std::size_t idx = 0; idx < seq.elements.size(); ++idx) {
    const auto& el = seq.elements[idx];
    if (el.kind == ElementKind::wait) {
      const auto step = ou_step_with_integral(delta, el.duration, noise.delta, rng);
      delta = step.next;
      eps = ou_step(eps, el.duration, noise.epsilon, rng);
      const Mat2 u =
          z_phase_unitary(step.integral + seq.static_detuning * el.duration);
      rho = u * rho * u.adjoint();
      continue;
    }
    // RF pulse. Noise is frozen during the pulse and advanced afterwards.
    Mat2 u;
    if (seq.mode == PulseMode::instantaneous) {
      u = ideal_rotation(el.nominal_area, el.drive.phase);
    } else {
      const Mat2 h = hamiltonian_reduced(seq.static_detuning + delta + el.drive.detuning,
                                         el.drive.rabi, eps, el.drive.phase);
      u = expm_i(h, el.duration);
    }
    if (el.alternating_readout) {
      if (idx + 1 != seq.elements.size())
        throw std::invalid_argument("alternating readout pulse must be last");
      Mat2 u_minus;
      if (seq.mode == PulseMode::instantaneous) {
        u_minus = ideal_rotation(el.nominal_area, el.drive.phase + pi);
      } else {
        const Mat2 h = hamiltonian_reduced(
            seq.static_detuning + delta + el.drive.detuning, el.drive.rabi, eps,
            el.drive.phase + pi);
        u_minus = expm_i(h, el.duration);
      }
      const Mat2 rho_p = u * rho * u.adjoint();
      const Mat2 rho_m = u_minus * rho * u_minus.adjoint();
      return p_up(rho_p) - p_up(rho_m);
    }
    rho = u * rho * u.adjoint();
    if (seq.mode == PulseMode::finite) {
      delta = ou_step(delta, el.duration, noise.delta, rng);
      eps = ou_step(eps, el.duration, noise.epsilon, rng);
    }
  }
  if (seq.readout == ReadoutKind::flip_probability) return p_up(rho);
  throw std::invalid_argument("reduced sequence must end in a readout");
}

// One noise trajectory of a full-model sequence (MW pulses, waits, resets).
inline double run_full_once(const PulseSequence& seq, const SpinSystemParams& sys,
                            const NoiseChannels& noise, Rng& rng) {
  Density4 rho;
  rho.m = kron((Mat2() << 0, 0, 0, 1).finished(), 0.5 * Mat2::Identity());
  const Mat2 h_nuc_up = nuclear_hamiltonian(sys, ElectronState::up);
  const Mat2 h_nuc_dn = nuclear_hamiltonian(sys, ElectronState::down);

  for (const auto& el : seq.elements) {
    switch (el.kind) {
      case ElementKind::mw_pulse: {
        DriveParams d = el.drive;
        d.detuning += sample_quasistatic(noise.delta, rng);
        const Mat4 h = hamiltonian_full(sys, d);
        rho = propagate(rho, h, el.duration);
        break;
      }
      case ElementKind::wait: {
        const Mat4 h = hamiltonian_full(sys, std::nullopt);
        rho = propagate(rho, h, el.duration);
        break;
      }
      case ElementKind::laser_reset: {
        const Mat2* dephase_h = nullptr;
        if (el.dephase_nuclear)
          dephase_h = (el.reset_target == ElectronState::up) ? &h_nuc_up : &h_nuc_dn;
        rho = apply_laser_reset(rho, el.reset_target, dephase_h);
        break;
      }
      default:
        throw std::invalid_argument("unsupported element in full model");
    }
  }
  return overlap(rho, Vec4(seq.readout_state));
}

}  // namespace detail

// Averages the sequence readout over n_traj independent noise trajectories.
// Trajectory RNG streams derive from (seed, point_index, trajectory), so the
// result is bit-identical regardless of thread count.
inline MeanStderr simulate_point(const PulseSequence& seq, const SpinSystemParams& sys,
                                 const NoiseChannels& noise, int n_traj,
                                 std::uint64_t seed, std::uint64_t point_index = 0,
                                 int threads = 0) {
  if (n_traj < 1) throw std::invalid_argument("n_traj must be >= 1");
  seq.validate();
  noise.delta.validate();
  noise.epsilon.validate();
  std::vector<double> vals(static_cast<std::size_t>(n_traj));
  parallel_for(
      static_cast<std::size_t>(n_traj),
      [&](std::size_t t) {
        Rng rng = stream_rng(seed, point_index, t);
        vals[t] = (seq.model == SequenceModel::reduced2)
                      ? detail::run_reduced_once(seq, noise, rng)
                      : detail::run_full_once(seq, sys, noise, rng);
      },
      threads);
  return mean_and_stderr(vals);
}

// Sweeps a family of sequences (one per x value). Each sweep point draws its
// own independent trajectory streams.
inline SimulationResult simulate_sweep(const std::vector<double>& xs,
                                       const std::vector<PulseSequence>& seqs,
                                       const SpinSystemParams& sys,
                                       const NoiseChannels& noise, int n_traj,
                                       std::uint64_t seed, int threads = 0) {
  if (xs.size() != seqs.size()) throw std::invalid_argument("sweep size mismatch");
  SimulationResult out;
  out.sweep = xs;
  out.n_traj = n_traj;
  out.seed = seed;
  out.mean.resize(xs.size());
  out.stderr_.resize(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const MeanStderr ms = simulate_point(seqs[i], sys, noise, n_traj, seed, i, threads);
    out.mean[i] = ms.mean;
    out.stderr_[i] = ms.stderr_;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spin pumping: polarization (overlap with the dark eigenstate) vs repetition.
// ---------------------------------------------------------------------------

struct SpinPumpResult {
  std::vector<int> repetition;  // 0..N
  std::vector<double> mean;
  std::vector<double> stderr_;
  int n_traj = 0;
  std::uint64_t seed = 0;
};

inline SpinPumpResult simulate_spin_pumping(int n_reps, const SpinSystemParams& sys,
                                            double t_pi, PumpTarget target,
                                            const OUParams& delta_e, int n_traj,
                                            std::uint64_t seed, int threads = 0) {
  if (n_reps < 0) throw std::invalid_argument("n_reps must be >= 0");
  if (n_traj < 1) throw std::invalid_argument("n_traj must be >= 1");
  const ManifoldSpectrum ms = manifold_spectrum(sys);
  const Vec4 v_target = (target == PumpTarget::v2) ? ms.v2 : ms.v1;
  const double carrier_offset =
      (target == PumpTarget::v2) ? ms.mw_offset_pump_v2 : ms.mw_offset_pump_v1;
  const Mat2 h_nuc_dn = nuclear_hamiltonian(sys, ElectronState::down);

  const std::size_t cols = static_cast<std::size_t>(n_reps) + 1;
  std::vector<double> table(static_cast<std::size_t>(n_traj) * cols);
  parallel_for(
      static_cast<std::size_t>(n_traj),
      [&](std::size_t t) {
        Rng rng = stream_rng(seed, 0x5050, t);
        Density4 rho;
        rho.m = kron((Mat2() << 0, 0, 0, 1).finished(), 0.5 * Mat2::Identity());
        table[t * cols] = overlap(rho, v_target);
        for (int rep = 1; rep <= n_reps; ++rep) {
          DriveParams d;
          d.channel = DriveChannel::mw;
          d.rabi = pi / t_pi;
          d.detuning = -carrier_offset + sample_quasistatic(delta_e, rng);
          rho = propagate(rho, hamiltonian_full(sys, d), t_pi);
          rho = apply_laser_reset(rho, ElectronState::down, &h_nuc_dn);
          table[t * cols + static_cast<std::size_t>(rep)] = overlap(rho, v_target);
        }
      },
      threads);

  SpinPumpResult out;
  out.n_traj = n_traj;
  out.seed = seed;
  out.repetition.resize(cols);
  out.mean.resize(cols);
  out.stderr_.resize(cols);
  std::vector<double> col(static_cast<std::size_t>(n_traj));
  for (std::size_t r = 0; r < cols; ++r) {
    for (std::size_t t = 0; t < static_cast<std::size_t>(n_traj); ++t)
      col[t] = table[t * cols + r];
    const MeanStderr m = mean_and_stderr(col);
    out.repetition[r] = static_cast<int>(r);
    out.mean[r] = m.mean;
    out.stderr_[r] = m.stderr_;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pulsed ODMR: swept narrow-band MW pi pulse with electron dephasing, laser
// reset with nuclear dephasing after every step. The nuclear state persists
// across the sweep, which is what makes the spectra direction-dependent.
// ---------------------------------------------------------------------------

struct OdmrRunParams {
  SpinSystemParams sys;   // b_z is the per-spectrum field B_i
  double gamma_e_eff = from_hz(31.6148e9);
  ElectronState manifold = ElectronState::down;
  double p_up_init = 0.5;  // initial |un> population along the manifold axis
  double mw_rabi = from_hz(349e3);
  double t_pi = pi / from_hz(349e3);
  OUParams delta_e{from_hz(146e3), 1.0};  // quasi-static electron dephasing
  int n_avg = 200;
  std::uint64_t seed = 1;
  int threads = 0;
};

struct OdmrResult {
  std::vector<double> freq_hz;  // in sweep order
  std::vector<double> signal;   // 1 - electron flip probability
  std::vector<double> signal_stderr;
  std::vector<double> nuclear_up_pop;  // before each MW pulse
};

namespace detail {

inline void validate_odmr_inputs(const std::vector<double>& freqs,
                                 const OdmrRunParams& prm) {
  if (freqs.size() < 2) throw std::invalid_argument("need at least two sweep points");
  const bool ascending = freqs.back() > freqs.front();
  for (std::size_t i = 1; i < freqs.size(); ++i) {
    const bool up = freqs[i] > freqs[i - 1];
    if (up != ascending) throw std::invalid_argument("sweep must be monotone");
  }
  if (prm.n_avg < 1) throw std::invalid_argument("n_avg must be >= 1");
  if (prm.p_up_init < 0.0 || prm.p_up_init > 1.0)
    throw std::invalid_argument("p_up_init must lie in [0, 1]");
}

}  // namespace detail

inline OdmrResult simulate_odmr(const std::vector<double>& freq_hz_in_sweep_order,
                                const OdmrRunParams& prm) {
  const auto& freqs = freq_hz_in_sweep_order;
  detail::validate_odmr_inputs(freqs, prm);

  const ManifoldSpectrum ms = manifold_spectrum(prm.sys);
  const bool up_mani = prm.manifold == ElectronState::up;
  const Vec2 n_up = up_mani ? ms.n_up_in_up : ms.n_up_in_down;
  const Vec2 n_dn = up_mani ? ms.n_dn_in_up : ms.n_dn_in_down;
  const Mat2 h_nuc = nuclear_hamiltonian(prm.sys, prm.manifold);
  Mat2 e_proj = Mat2::Zero();
  e_proj(up_mani ? 0 : 1, up_mani ? 0 : 1) = 1.0;
  const Mat2 rho_n0 =
      prm.p_up_init * (n_up * n_up.adjoint()) + (1.0 - prm.p_up_init) * (n_dn * n_dn.adjoint());

  const std::size_t nf = freqs.size();
  const std::size_t na = static_cast<std::size_t>(prm.n_avg);
  std::vector<double> sig(na * nf), pop(na * nf);

  parallel_for(
      na,
      [&](std::size_t pass) {
        Rng rng = stream_rng(prm.seed, 0x0d31, pass);
        Mat2 rho_n = rho_n0;
        for (std::size_t k = 0; k < nf; ++k) {
          pop[pass * nf + k] = std::real(n_up.dot(rho_n * n_up));
          DriveParams d;
          d.channel = DriveChannel::mw;
          d.rabi = prm.mw_rabi;
          d.detuning = prm.gamma_e_eff * prm.sys.b_z - two_pi * freqs[k] +
                       sample_quasistatic(prm.delta_e, rng);
          Density4 rho;
          rho.m = kron(e_proj, rho_n);
          rho = propagate(rho, hamiltonian_full(prm.sys, d), prm.t_pi);
          const Mat2 e_marg = trace_out_nuclear(rho);
          const double stay = std::real(e_marg(up_mani ? 0 : 1, up_mani ? 0 : 1));
          sig[pass * nf + k] = stay;  // 1 - flip probability
          rho_n = dephase_in_eigenbasis(trace_out_electron(rho), h_nuc);
        }
      },
      prm.threads);

  OdmrResult out;
  out.freq_hz = freqs;
  out.signal.resize(nf);
  out.signal_stderr.resize(nf);
  out.nuclear_up_pop.resize(nf);
  std::vector<double> col(na);
  for (std::size_t k = 0; k < nf; ++k) {
    for (std::size_t p = 0; p < na; ++p) col[p] = sig[p * nf + k];
    const MeanStderr m = mean_and_stderr(col);
    out.signal[k] = m.mean;
    out.signal_stderr[k] = m.stderr_;
    for (std::size_t p = 0; p < na; ++p) col[p] = pop[p * nf + k];
    out.nuclear_up_pop[k] = pairwise_mean(col);
  }
  return out;
}

// Gauss-Hermite nodes and weights for averaging over a standard normal,
// computed by the Golub-Welsch eigen method.
struct GaussHermite {
  std::vector<double> nodes;    // values of a unit normal variate
  std::vector<double> weights;  // sum to 1
};

inline GaussHermite gauss_hermite_normal(int n) {
  if (n < 1) throw std::invalid_argument("need at least one quadrature node");
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = std::sqrt(0.5 * k);
    j(k - 1, k) = b;
    j(k, k - 1) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  GaussHermite gh;
  gh.nodes.resize(static_cast<std::size_t>(n));
  gh.weights.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    gh.nodes[static_cast<std::size_t>(k)] = std::sqrt(2.0) * es.eigenvalues()(k);
    const double v = es.eigenvectors()(0, k);
    gh.weights[static_cast<std::size_t>(k)] = v * v;
  }
  return gh;
}

// Exact infinite-average ODMR spectrum. The per-step detuning draws are
// independent and every map is linear in the density matrix, so averaging
// each step's channel over the Gaussian detuning (Gauss-Hermite quadrature)
// and propagating the mean nuclear state reproduces the n_avg -> infinity
// limit of simulate_odmr with no Monte Carlo noise.
inline OdmrResult simulate_odmr_mean(const std::vector<double>& freq_hz_in_sweep_order,
                                     const OdmrRunParams& prm, int quad_nodes = 20) {
  const auto& freqs = freq_hz_in_sweep_order;
  detail::validate_odmr_inputs(freqs, prm);
  const GaussHermite gh = gauss_hermite_normal(quad_nodes);

  const ManifoldSpectrum ms = manifold_spectrum(prm.sys);
  const bool up_mani = prm.manifold == ElectronState::up;
  const Vec2 n_up = up_mani ? ms.n_up_in_up : ms.n_up_in_down;
  const Vec2 n_dn = up_mani ? ms.n_dn_in_up : ms.n_dn_in_down;
  const Mat2 h_nuc = nuclear_hamiltonian(prm.sys, prm.manifold);
  Mat2 e_proj = Mat2::Zero();
  e_proj(up_mani ? 0 : 1, up_mani ? 0 : 1) = 1.0;

  OdmrResult out;
  out.freq_hz = freqs;
  const std::size_t nf = freqs.size();
  out.signal.resize(nf);
  out.signal_stderr.assign(nf, 0.0);
  out.nuclear_up_pop.resize(nf);

  Mat2 rho_n = prm.p_up_init * (n_up * n_up.adjoint()) +
               (1.0 - prm.p_up_init) * (n_dn * n_dn.adjoint());
  for (std::size_t k = 0; k < nf; ++k) {
    out.nuclear_up_pop[k] = std::real(n_up.dot(rho_n * n_up));
    double stay = 0.0;
    Mat2 next_n = Mat2::Zero();
    for (std::size_t q = 0; q < gh.nodes.size(); ++q) {
      DriveParams d;
      d.channel = DriveChannel::mw;
      d.rabi = prm.mw_rabi;
      d.detuning = prm.gamma_e_eff * prm.sys.b_z - two_pi * freqs[k] +
                   prm.delta_e.sigma * gh.nodes[q];
      Density4 rho;
      rho.m = kron(e_proj, rho_n);
      rho = propagate(rho, hamiltonian_full(prm.sys, d), prm.t_pi);
      const Mat2 e_marg = trace_out_nuclear(rho);
      stay += gh.weights[q] * std::real(e_marg(up_mani ? 0 : 1, up_mani ? 0 : 1));
      next_n += gh.weights[q] * trace_out_electron(rho);
    }
    out.signal[k] = stay;
    rho_n = dephase_in_eigenbasis(next_n, h_nuc);
  }
  return out;
}

}  // namespace spinmem
