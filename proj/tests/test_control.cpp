#include <catch2/catch.hpp>
#include <cmath>

#include "spinmem/control.hpp"

using namespace spinmem;

namespace {
const SpinSystemParams g_sys{};
}

TEST_CASE("flattop envelope boundaries and plateau") {
  PulseShape p;
  p.duration = 2950e-9;
  p.rise_time = 100e-9;
  p.amp_offset = from_hz(500e3);
  CHECK(p.rabi_at(0.0) == 0.0);
  CHECK(p.rabi_at(p.duration) == 0.0);
  for (double t = 5.0 * p.rise_time; t <= p.duration - 5.0 * p.rise_time;
       t += 50e-9)
    CHECK(p.envelope(t) == 1.0);
  CHECK(p.envelope(2.5 * p.rise_time) > 0.0);
  CHECK(p.envelope(2.5 * p.rise_time) < 1.0);

  PulseShape zero = p;
  zero.amp_offset = 0.0;
  for (double t = 0.0; t <= zero.duration; t += 10e-9) CHECK(zero.rabi_at(t) == 0.0);
}

TEST_CASE("peak-Rabi clamp holds pointwise on a 1 ns grid") {
  PulseShape p;
  p.duration = 2950e-9;
  p.clamp = from_hz(2e6);
  p.amp_offset = from_hz(5e6);
  p.amp.push_back({1.3e6, from_hz(4e6), from_hz(-3e6)});
  p.phase.push_back({0.7e6, 1.0, -2.0});
  for (int i = 0; i <= 2950; ++i) {
    const double w = p.rabi_at(i * 1e-9);
    CHECK(std::fabs(w) <= p.clamp * (1.0 + 1e-12));
  }
}

TEST_CASE("polarization figure of merit") {
  const auto ms = manifold_spectrum(g_sys);
  CHECK(polarization_fom(Density4::pure(ms.v2), ms) == Approx(0.0).margin(1e-12));
  CHECK(polarization_fom(Density4::pure(ms.v2f), ms) == Approx(0.0).margin(1e-12));
  CHECK(polarization_fom(Density4::maximally_mixed(), ms) ==
        Approx(0.5).margin(1e-12));
  CHECK(polarization_fom(Density4::pure(ms.v1), ms) == Approx(1.0).margin(1e-12));
}

TEST_CASE("zero pulse leaves the initial polarization") {
  const auto ms = manifold_spectrum(g_sys);
  PulseShape zero;
  zero.duration = 1000e-9;
  const auto rho = propagate_shaped_pulse(g_sys, ms, zero, 0.0, 5e-9);
  CHECK(polarization_fom(rho, ms) == Approx(0.5).margin(1e-9));
}

TEST_CASE("segment-halving convergence of the shaped-pulse propagator") {
  const auto ms = manifold_spectrum(g_sys);
  PulseShape p;
  p.duration = 2950e-9;
  p.clamp = from_hz(2e6);
  p.amp_offset = from_hz(640e3);
  p.amp.push_back({493.5e3, from_hz(120e3), from_hz(-80e3)});
  p.phase.push_back({1.1e6, 0.8, -0.4});
  const auto f = [&](double dt) {
    return polarization_fom(propagate_shaped_pulse(g_sys, ms, p, 0.0, dt), ms);
  };
  CHECK(std::fabs(f(5e-9) - f(2.5e-9)) < 1e-4);
}

TEST_CASE("dCRAB basics: validation, determinism, monotone history") {
  DcrabSettings st;
  st.super_iterations = 2;
  st.evals_per_super_iteration = 40;
  st.optimization_pool = 1;
  st.evaluation_pool = 1;
  st.seed = 9;
  st.threads = 1;
  const OUParams no_noise{0.0, 1.0};

  CHECK_THROWS_AS(dcrab_optimize(g_sys, 150e-9, st, no_noise), std::invalid_argument);
  DcrabSettings rwa_bad = st;
  rwa_bad.clamp = from_hz(2e9);
  CHECK_THROWS_AS(dcrab_optimize(g_sys, 2950e-9, rwa_bad, no_noise),
                  std::invalid_argument);

  const auto a = dcrab_optimize(g_sys, 2950e-9, st, no_noise);
  const auto b = dcrab_optimize(g_sys, 2950e-9, st, no_noise);
  CHECK(a.fom_evaluation_pool == b.fom_evaluation_pool);
  CHECK(a.pulse.amp_offset == b.pulse.amp_offset);

  REQUIRE(a.history.size() == 3);
  for (std::size_t i = 1; i < a.history.size(); ++i)
    CHECK(a.history[i].value <= a.history[i - 1].value);
  CHECK(a.fom_evaluation_pool <= 0.5);  // never loses to doing nothing
}

TEST_CASE("short noiseless optimization makes clear progress") {
  DcrabSettings st;
  st.super_iterations = 2;
  st.evals_per_super_iteration = 250;
  st.optimization_pool = 1;
  st.evaluation_pool = 1;
  st.seed = 2;
  st.threads = 1;
  const auto r = dcrab_optimize(g_sys, 2950e-9, st, OUParams{0.0, 1.0});
  CHECK(r.fom_evaluation_pool < 0.15);
}
