#include <catch2/catch.hpp>
#include <cmath>

#include "spinmem/analytics.hpp"
#include "spinmem/sequences.hpp"

using namespace spinmem;

namespace {
const SpinSystemParams g_sys{};
const NoiseChannels quiet{{0.0, 1.0}, {0.0, 1.0}};
}  // namespace

TEST_CASE("builders: CPMG of order one is a Hahn echo") {
  const double rabi = from_hz(11.73e3);
  const auto hahn = build_hahn(0.05, rabi, PulseMode::finite);
  const auto cpmg1 = build_cpmg(1, 0.05, rabi, PulseMode::finite);
  REQUIRE(hahn.elements.size() == cpmg1.elements.size());
  for (std::size_t i = 0; i < hahn.elements.size(); ++i) {
    CHECK(hahn.elements[i].kind == cpmg1.elements[i].kind);
    CHECK(hahn.elements[i].duration == cpmg1.elements[i].duration);
    CHECK(hahn.elements[i].drive.phase == cpmg1.elements[i].drive.phase);
  }
  CHECK(hahn.elements.size() == 5);  // pi/2, wait, pi, wait, pi/2
  CHECK_THROWS_AS(build_cpmg(0, 0.05, rabi, PulseMode::finite), std::invalid_argument);
}

TEST_CASE("builders: XY8 phase pattern") {
  const auto phases = xy8_phases(8);
  const double x = 0.0, y = pi / 2.0;
  const std::vector<double> expected{x, y, x, y, y, x, y, x};
  CHECK(phases == expected);
  const auto p16 = xy8_phases(16);
  for (int k = 0; k < 8; ++k) CHECK(p16[8 + k] == expected[k]);
  CHECK_THROWS_AS(xy8_phases(12), std::invalid_argument);
  CHECK_THROWS_AS(xy8_phases(0), std::invalid_argument);
}

TEST_CASE("builders: spin pumping layout") {
  const auto ms = manifold_spectrum(g_sys);
  const auto seq = build_spin_pumping(15, 1.4e-6, PumpTarget::v2, ms);
  REQUIRE(seq.elements.size() == 30);
  for (std::size_t i = 0; i < seq.elements.size(); i += 2) {
    CHECK(seq.elements[i].kind == ElementKind::mw_pulse);
    CHECK(seq.elements[i].duration == Approx(1.4e-6));
    CHECK(seq.elements[i].drive.rabi == Approx(pi / 1.4e-6));
    CHECK(seq.elements[i + 1].kind == ElementKind::laser_reset);
  }
  CHECK(seq.model == SequenceModel::full4);
  CHECK((seq.readout_state - ms.v2).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("model/element compatibility is enforced") {
  const auto ms = manifold_spectrum(g_sys);
  auto pump = build_spin_pumping(2, 1.4e-6, PumpTarget::v2, ms);
  pump.model = SequenceModel::reduced2;
  CHECK_THROWS_AS(pump.validate(), std::invalid_argument);

  auto swap = build_projection_swap(ms, from_hz(349e3), from_hz(7.73e3));
  CHECK_THROWS_AS(simulate_point(swap, g_sys, quiet, 4, 1), std::invalid_argument);
  CHECK(duty_cycle(swap) > 0.0);  // still useful for duty-cycle accounting
}

TEST_CASE("noiseless Ramsey and CPMG hold full contrast") {
  const double rabi = from_hz(11.73e3);
  for (double t : {1e-3, 50e-3, 400e-3}) {
    const auto seq = build_ramsey(t, rabi, PulseMode::instantaneous);
    CHECK(simulate_point(seq, g_sys, quiet, 8, 1).mean == Approx(1.0).margin(1e-12));
  }
  for (int n : {1, 4}) {
    for (double tt : {20e-3, 200e-3}) {
      const auto seq = build_cpmg(n, 0.5 * tt, rabi, PulseMode::instantaneous);
      CHECK(simulate_point(seq, g_sys, quiet, 8, 1).mean == Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("quasi-static detuning refocuses in a Hahn echo") {
  NoiseChannels frozen{{from_hz(100.0), 1e12}, {0.0, 1.0}};
  const auto seq = build_hahn(0.1, from_hz(11.73e3), PulseMode::instantaneous);
  const auto r = simulate_point(seq, g_sys, frozen, 300, 5);
  CHECK(r.mean == Approx(1.0).margin(3.0 * r.stderr_ + 1e-6));
}

TEST_CASE("deliberate detuning produces Ramsey fringes at the set frequency") {
  const double delta0 = from_hz(50.0);
  const double rabi = from_hz(11.73e3);
  for (double t : {2e-3, 5e-3, 9e-3, 13e-3}) {
    const auto seq = build_ramsey(t, rabi, PulseMode::instantaneous, delta0);
    const auto r = simulate_point(seq, g_sys, quiet, 4, 1);
    CHECK(r.mean == Approx(std::cos(delta0 * t)).margin(1e-9));
  }
}

TEST_CASE("Monte Carlo Hahn decay matches the closed-form exponent") {
  NoiseChannels noise{{from_hz(112.5), 829.0}, {0.0, 500e-6}};
  for (double tt : {0.12, 0.271}) {
    const auto seq = build_hahn(0.5 * tt, from_hz(11.73e3), PulseMode::instantaneous);
    const auto r = simulate_point(seq, g_sys, noise, 1500, 17);
    const DecaySpec s{1, tt, noise.delta.sigma, noise.delta.tau_c};
    CHECK(r.mean == Approx(std::exp(-decay_rate_exact(s))).margin(3.0 * r.stderr_));
  }
}

TEST_CASE("simulation results are bit-reproducible and thread-count independent") {
  NoiseChannels noise{{from_hz(112.5), 829.0}, {0.005, 500e-6}};
  const auto seq = build_cpmg(2, 0.05, from_hz(11.73e3), PulseMode::finite);
  const auto a = simulate_point(seq, g_sys, noise, 64, 123, 0, 1);
  const auto b = simulate_point(seq, g_sys, noise, 64, 123, 0, 1);
  const auto c = simulate_point(seq, g_sys, noise, 64, 123, 0, 3);
  CHECK(a.mean == b.mean);
  CHECK(a.stderr_ == b.stderr_);
  CHECK(a.mean == c.mean);
  CHECK(a.stderr_ == c.stderr_);
  const auto d = simulate_point(seq, g_sys, noise, 64, 124, 0, 1);
  CHECK(a.mean != d.mean);
}

TEST_CASE("spin pumping polarizes the nucleus into the dark state") {
  const OUParams delta_e{from_hz(146e3), 1.0};
  const auto r = simulate_spin_pumping(15, g_sys, 1.4e-6, PumpTarget::v2, delta_e,
                                       400, 12345);
  CHECK(r.mean[0] == Approx(0.5).margin(1e-12));  // unpolarized start
  CHECK(r.mean[15] >= 0.92);
  CHECK(r.mean[15] <= 0.97);
  CHECK(r.mean[5] > r.mean[1]);  // gradual buildup
  CHECK(r.mean[15] > r.mean[5]);

  const auto r1 = simulate_spin_pumping(3, g_sys, 1.4e-6, PumpTarget::v1, delta_e,
                                        200, 99);
  CHECK(r1.mean[3] > 0.6);  // the other carrier pumps the other dark state
}

TEST_CASE("ODMR requires a monotone sweep and valid inputs") {
  OdmrRunParams prm;
  prm.sys = g_sys;
  prm.n_avg = 2;
  CHECK_THROWS_AS(simulate_odmr({1e9, 2e9, 1.5e9}, prm), std::invalid_argument);
  prm.p_up_init = 1.5;
  CHECK_THROWS_AS(simulate_odmr({1e9, 2e9}, prm), std::invalid_argument);
}

TEST_CASE("decoupled ODMR spectra are direction-independent") {
  OdmrRunParams prm;
  prm.sys = g_sys;
  prm.sys.a_zx = 0.0;  // no nuclear mixing, no polarization transfer
  prm.gamma_e_eff = prm.sys.gamma_e_eff;
  prm.manifold = ElectronState::down;
  prm.p_up_init = 0.37;
  prm.delta_e = {0.0, 1.0};  // deterministic
  prm.n_avg = 1;
  const double center = to_hz(prm.gamma_e_eff * prm.sys.b_z);
  std::vector<double> up, dn;
  for (int k = 0; k <= 80; ++k) up.push_back(center - 2.2e6 + 5.5e4 * k);
  dn.assign(up.rbegin(), up.rend());
  const auto a = simulate_odmr(up, prm);
  const auto b = simulate_odmr(dn, prm);
  for (std::size_t k = 0; k < up.size(); ++k) {
    CHECK(a.signal[k] == Approx(b.signal[up.size() - 1 - k]).margin(1e-10));
    CHECK(a.nuclear_up_pop[k] == Approx(0.37).margin(1e-10));
  }
  // Two static dips whose depths equal the populations of the two nuclear
  // rows: the deepest reaches 1 - max(p, 1-p).
  double min_sig = 1.0;
  for (double s : a.signal) min_sig = std::min(min_sig, s);
  CHECK(min_sig == Approx(1.0 - 0.63).margin(0.05));
}

TEST_CASE("coupled ODMR sweeps build up nuclear polarization") {
  OdmrRunParams prm;
  prm.sys = g_sys;
  prm.gamma_e_eff = prm.sys.gamma_e_eff;
  prm.manifold = ElectronState::down;
  prm.p_up_init = 0.4;
  prm.n_avg = 60;
  prm.seed = 7;
  const double center = to_hz(prm.gamma_e_eff * prm.sys.b_z);
  std::vector<double> freqs;
  for (int k = 0; k <= 96; ++k) freqs.push_back(center + 2.4e6 - 5e4 * k);
  const auto r = simulate_odmr(freqs, prm);
  CHECK(r.nuclear_up_pop.front() == Approx(0.4).margin(1e-9));
  CHECK(r.nuclear_up_pop.back() > 0.8);  // pumped during the sweep
}

TEST_CASE("sequence request dispatch") {
  const auto ms = manifold_spectrum(g_sys);
  SequenceRequest r;
  r.kind = SequenceKind::xy8;
  r.n = 8;
  r.tau = 0.01;
  r.rabi = from_hz(11.73e3);
  const auto seq = build_sequence(r, ms);
  CHECK(seq.elements.size() == 2 + 3 * 8);
  r.kind = SequenceKind::rabi;
  r.drive_time = 42.6e-6;
  const auto rabi_seq = build_sequence(r, ms);
  const auto res = simulate_point(rabi_seq, g_sys, quiet, 4, 1);
  CHECK(res.mean >= 0.999);  // pi-time drive flips the spin
}

TEST_CASE("ODMR step builder") {
  const auto ms = manifold_spectrum(g_sys);
  SequenceRequest r;
  r.kind = SequenceKind::odmr_step;
  r.rabi = from_hz(349e3);
  r.static_detuning = from_hz(1.2e6);
  r.manifold = ElectronState::down;
  const auto seq = build_sequence(r, ms);
  REQUIRE(seq.elements.size() == 2);
  CHECK(seq.elements[0].kind == ElementKind::mw_pulse);
  CHECK(seq.elements[0].duration == Approx(pi / from_hz(349e3)));
  CHECK(seq.elements[1].kind == ElementKind::laser_reset);
  CHECK(seq.elements[1].reset_target == ElectronState::down);
  // Resonant at the bright line of the occupied eigenstate: a step drains it.
  SequenceRequest on;
  on = r;
  on.static_detuning = -ms.mw_offset_pump_v2;
  const auto res = simulate_point(build_sequence(on, ms), g_sys, quiet, 4, 1);
  CHECK(res.mean > 0.5);  // population moved toward v2
}
