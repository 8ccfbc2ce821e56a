#include <catch2/catch.hpp>

#include "spinmem/analytics.hpp"
#include "spinmem/rng.hpp"
#include "spinmem/spin_model.hpp"

using namespace spinmem;

TEST_CASE("manifold spectrum reproduces the measured transition frequencies") {
  const SpinSystemParams sys;  // defaults: fitted couplings at 97.159 mT
  const auto ms = manifold_spectrum(sys);
  CHECK(to_hz(ms.omega_rf1) / 1e3 == Approx(2489.73).epsilon(5e-4));
  CHECK(to_hz(ms.omega_rf2) / 1e3 == Approx(493.62).epsilon(2e-3));
  CHECK(ms.axis_angle() * 180.0 / pi == Approx(30.0).margin(1.5));
}

TEST_CASE("manifold eigenvectors are orthonormal and consistently labelled") {
  const auto ms = manifold_spectrum(SpinSystemParams{});
  const Vec4* vs[4] = {&ms.v1, &ms.v2, &ms.v3, &ms.v4};
  for (int i = 0; i < 4; ++i) {
    CHECK(vs[i]->norm() == Approx(1.0).margin(1e-12));
    for (int j = i + 1; j < 4; ++j)
      CHECK(std::abs(vs[i]->dot(*vs[j])) < 1e-12);
  }
  const Mat4 flip = kron(pauli_x(), Mat2::Identity());
  CHECK((ms.v2f - flip * ms.v2).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(ms.strong_overlap * ms.strong_overlap + ms.weak_overlap * ms.weak_overlap ==
        Approx(1.0).margin(1e-12));
}

TEST_CASE("axially symmetric coupling gives parallel quantization axes") {
  SpinSystemParams sys;
  sys.a_zx = 0.0;
  const auto ms = manifold_spectrum(sys);
  CHECK(ms.axis_angle() == Approx(0.0).margin(1e-12));
  CHECK(ms.weak_overlap == Approx(0.0).margin(1e-12));
}

TEST_CASE("hyperfine inversion matches the published couplings") {
  const auto hf =
      hyperfine_from_frequencies(from_hz(2489.73e3), from_hz(493.62e3), 97.159e-3);
  CHECK(to_hz(hf.a_zz) / 1e3 == Approx(2862.3).epsilon(1e-3));
  CHECK(to_hz(hf.a_zx) / 1e3 == Approx(602.8).epsilon(2e-3));
}

TEST_CASE("hyperfine inversion is the exact inverse of the manifold splittings") {
  Rng rng(17);
  for (int k = 0; k < 1000; ++k) {
    SpinSystemParams sys;
    sys.a_zz = from_hz(0.5e6 + 4.5e6 * rng.uniform());
    sys.a_zx = from_hz(2.0e6 * rng.uniform());
    sys.b_z = 0.05 + 0.1 * rng.uniform();
    const auto ms = manifold_spectrum(sys);
    const auto hf = hyperfine_from_frequencies(ms.omega_rf1, ms.omega_rf2, sys.b_z,
                                               sys.gamma_n);
    CHECK(hf.a_zz == Approx(sys.a_zz).epsilon(1e-9));
    CHECK(hf.a_zx == Approx(sys.a_zx).margin(1e-9 * ms.omega_rf2));
  }
}

TEST_CASE("hyperfine inversion edge cases") {
  // Boundary of the discriminant: a_zx = 0 exactly.
  SpinSystemParams sys;
  sys.a_zx = 0.0;
  const auto ms = manifold_spectrum(sys);
  const auto hf =
      hyperfine_from_frequencies(ms.omega_rf1, ms.omega_rf2, sys.b_z, sys.gamma_n);
  CHECK(hf.a_zx == Approx(0.0).margin(1e-6 * ms.omega_rf2));

  CHECK_THROWS_AS(hyperfine_from_frequencies(from_hz(1e6), from_hz(2e6), 0.1),
                  std::invalid_argument);
  // omega_rf2 far too small for any real a_zx at this field.
  CHECK_THROWS_AS(
      hyperfine_from_frequencies(from_hz(2489.73e3), from_hz(100e3), 97.159e-3),
      std::invalid_argument);
}

TEST_CASE("full Hamiltonian block structure") {
  SpinSystemParams sys;
  SECTION("no transverse coupling: diagonal in the product basis") {
    sys.a_zx = 0.0;
    const Mat4 h = hamiltonian_full(sys, std::nullopt);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (i != j) CHECK(std::abs(h(i, j)) < 1e-9);
  }
  SECTION("block gaps equal the manifold splittings") {
    const Mat4 h = hamiltonian_full(sys, std::nullopt);
    const auto ms = manifold_spectrum(sys);
    Eigen::SelfAdjointEigenSolver<Mat2> up(h.block<2, 2>(0, 0));
    Eigen::SelfAdjointEigenSolver<Mat2> dn(h.block<2, 2>(2, 2));
    CHECK(up.eigenvalues()(1) - up.eigenvalues()(0) ==
          Approx(ms.omega_rf2).epsilon(1e-10));
    CHECK(dn.eigenvalues()(1) - dn.eigenvalues()(0) ==
          Approx(ms.omega_rf1).epsilon(1e-10));
  }
  SECTION("spectrum is invariant under frame shifts along S_z") {
    const Mat4 h = hamiltonian_full(sys, std::nullopt);
    const Mat4 shifted = h + from_hz(3.3e6) * Sz4();
    Eigen::SelfAdjointEigenSolver<Mat2> a(h.block<2, 2>(0, 0)),
        b(shifted.block<2, 2>(0, 0));
    CHECK(a.eigenvalues()(1) - a.eigenvalues()(0) ==
          Approx(b.eigenvalues()(1) - b.eigenvalues()(0)).epsilon(1e-12));
  }
  SECTION("drive enters through S_x with the requested detuning") {
    DriveParams d;
    d.rabi = from_hz(349e3);
    d.detuning = from_hz(1e6);
    const Mat4 h = hamiltonian_full(sys, d);
    const Mat4 diff = h - hamiltonian_full(sys, std::nullopt, d.detuning);
    CHECK((diff - d.rabi * Sx4()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("reduced Hamiltonian axis conventions") {
  const double rabi = from_hz(11.73e3);
  CHECK((hamiltonian_reduced(0.0, rabi) - rabi * sx2()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((hamiltonian_reduced(0.0, rabi, 0.0, pi / 2.0) - rabi * sy2())
            .cwiseAbs()
            .maxCoeff() < 1e-9 * rabi);
  CHECK_THROWS_AS(hamiltonian_reduced(0.0, rabi, 1.5), std::invalid_argument);

  // A pi/2 rotation about y maps |down> onto -x.
  Density2 down;
  down.m << 0, 0, 0, 1;
  const auto rotated =
      propagate(down, hamiltonian_reduced(0.0, rabi, 0.0, pi / 2.0),
                pi / (2.0 * rabi));
  CHECK(2.0 * std::real(rotated.m(0, 1)) == Approx(-1.0).margin(1e-10));
}

TEST_CASE("a detuned pi pulse keeps a high gate fidelity at one sigma") {
  const double rabi = from_hz(11.73e3);
  const Mat2 u_ideal = expm_i(Mat2(rabi * sx2()), pi / rabi);
  const Mat2 u = expm_i(hamiltonian_reduced(from_hz(112.5), rabi), pi / rabi);
  CHECK(pulse_fidelity(u, u_ideal) >= 0.9993);
}

TEST_CASE("parameter validation") {
  SpinSystemParams sys;
  sys.b_z = -1.0;
  CHECK_THROWS_AS(sys.validate(), std::invalid_argument);
  sys = SpinSystemParams{};
  sys.a_zx = -1.0;
  CHECK_THROWS_AS(manifold_spectrum(sys), std::invalid_argument);
}
