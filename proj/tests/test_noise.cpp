#include <catch2/catch.hpp>
#include <cmath>

#include "spinmem/analytics.hpp"
#include "spinmem/noise.hpp"

using namespace spinmem;

TEST_CASE("ou_step basics") {
  OUParams p{from_hz(112.5), 829.0};
  Rng rng(1);
  CHECK(ou_step(0.37, 0.0, p, rng) == 0.37);
  CHECK_THROWS_AS(ou_step(0.0, -1.0, p, rng), std::invalid_argument);
  CHECK(p.diffusion() == Approx(2.0 * p.sigma * p.sigma / p.tau_c));

  OUParams bad{-1.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = {1.0, 0.0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("ou_step reaches the stationary distribution for long steps") {
  OUParams p{2.5, 1.0};
  Rng rng(42);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = ou_step(123.0, 50.0, p, rng);  // dt >> tau_c
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  CHECK(sd == Approx(p.sigma).epsilon(0.02));
  CHECK(std::fabs(mean) < 3.0 * p.sigma / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("trajectory autocorrelation follows the exponential kernel") {
  OUParams p{1.0, 0.5};
  const int n_traj = 10000;
  std::vector<double> times;
  for (int k = 0; k <= 8; ++k) times.push_back(0.1 * k);
  std::vector<double> corr(times.size(), 0.0);
  for (int t = 0; t < n_traj; ++t) {
    const auto tr = sample_trajectory(p, times, 99, static_cast<std::uint64_t>(t));
    for (std::size_t k = 0; k < times.size(); ++k)
      corr[k] += tr.values[0] * tr.values[k] / n_traj;
  }
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double expected = p.sigma * p.sigma * std::exp(-times[k] / p.tau_c);
    CHECK(corr[k] == Approx(expected).margin(0.05 * p.sigma * p.sigma));
  }
}

TEST_CASE("trajectories are deterministic given seed and grid") {
  OUParams p{0.7, 2.0};
  const std::vector<double> times{0.0, 0.1, 0.4, 1.0};
  const auto a = sample_trajectory(p, times, 1234, 5);
  const auto b = sample_trajectory(p, times, 1234, 5);
  const auto c = sample_trajectory(p, times, 1234, 6);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);

  std::vector<double> decreasing{0.0, 0.2, 0.1};
  CHECK_THROWS_AS(sample_trajectory(p, decreasing, 1, 0), std::invalid_argument);
}

TEST_CASE("one long step and many sub-steps agree in distribution") {
  OUParams p{1.3, 0.7};
  const double total = 0.9;
  const int n = 20000;
  double m1 = 0.0, v1 = 0.0, m2 = 0.0, v2 = 0.0;
  for (int t = 0; t < n; ++t) {
    Rng ra = stream_rng(5, 0, static_cast<std::uint64_t>(t));
    Rng rb = stream_rng(6, 0, static_cast<std::uint64_t>(t));
    const double x0 = 0.8;
    const double one = ou_step(x0, total, p, ra);
    double sub = x0;
    for (int k = 0; k < 9; ++k) sub = ou_step(sub, total / 9.0, p, rb);
    m1 += one / n;
    v1 += one * one / n;
    m2 += sub / n;
    v2 += sub * sub / n;
  }
  const double e = std::exp(-total / p.tau_c);
  const double expect_mean = 0.8 * e;
  const double expect_var = p.sigma * p.sigma * (1.0 - e * e);
  CHECK(m1 == Approx(expect_mean).margin(0.035));
  CHECK(m2 == Approx(expect_mean).margin(0.035));
  CHECK(v1 - m1 * m1 == Approx(expect_var).epsilon(0.05));
  CHECK(v2 - m2 * m2 == Approx(expect_var).epsilon(0.05));
}

TEST_CASE("joint endpoint-integral sampler matches the OU moments") {
  OUParams p{1.1, 0.6};
  const double dt = 0.45;
  const int n = 40000;
  const double x0 = 0.5;
  double mi = 0.0, vi = 0.0, cov = 0.0, mx = 0.0;
  for (int t = 0; t < n; ++t) {
    Rng rng = stream_rng(17, 0, static_cast<std::uint64_t>(t));
    const auto s = ou_step_with_integral(x0, dt, p, rng);
    mi += s.integral / n;
    vi += s.integral * s.integral / n;
    mx += s.next / n;
    cov += s.integral * s.next / n;
  }
  const double e = std::exp(-dt / p.tau_c);
  const double s2 = p.sigma * p.sigma;
  const double expect_mi = x0 * p.tau_c * (1.0 - e);
  const double expect_vi =
      2.0 * s2 * p.tau_c * dt - s2 * p.tau_c * p.tau_c * (3.0 - 4.0 * e + e * e);
  const double expect_cov = s2 * p.tau_c * (1.0 - e) * (1.0 - e);
  CHECK(mi == Approx(expect_mi).epsilon(0.03));
  CHECK(vi - mi * mi == Approx(expect_vi).epsilon(0.05));
  CHECK(cov - mi * mx == Approx(expect_cov).epsilon(0.08));
}

TEST_CASE("echo-filtered integral variance reproduces the analytic decay rate") {
  // Hahn filter: phase = I[0,tau] - I[tau,2tau] from a stationary start. Its
  // variance must equal twice the closed-form decay exponent.
  OUParams p{from_hz(112.5), 829.0};
  const double tau = 0.2;
  const int n = 60000;
  double var = 0.0;
  for (int t = 0; t < n; ++t) {
    Rng rng = stream_rng(23, 0, static_cast<std::uint64_t>(t));
    double x = sample_quasistatic(p, rng);
    const auto seg1 = ou_step_with_integral(x, tau, p, rng);
    const auto seg2 = ou_step_with_integral(seg1.next, tau, p, rng);
    const double phase = seg1.integral - seg2.integral;
    var += phase * phase / n;
  }
  const DecaySpec spec{1, 2.0 * tau, p.sigma, p.tau_c};
  CHECK(0.5 * var == Approx(decay_rate_exact(spec)).epsilon(0.03));
}

TEST_CASE("quasi-static draws") {
  OUParams zero{0.0, 1.0};
  Rng rng(3);
  for (int k = 0; k < 10; ++k) CHECK(sample_quasistatic(zero, rng) == 0.0);

  // sqrt(2)/T2* calibration of the nuclear dephasing channel.
  CHECK(std::sqrt(2.0) / 2.00e-3 == Approx(from_hz(112.5)).epsilon(0.01));
  // Draws follow the requested standard deviation.
  OUParams nuc{from_hz(112.5), 829.0};
  double s2 = 0.0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const double d = sample_quasistatic(nuc, rng);
    s2 += d * d / n;
  }
  CHECK(std::sqrt(s2) == Approx(nuc.sigma).epsilon(0.03));
}
