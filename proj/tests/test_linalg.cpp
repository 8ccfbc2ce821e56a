#include <catch2/catch.hpp>

#include "spinmem/linalg.hpp"
#include "spinmem/rng.hpp"

using namespace spinmem;

namespace {

Mat4 random_hermitian4(Rng& rng, double scale) {
  Mat4 a;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) a(i, j) = cplx{rng.normal(), rng.normal()};
  return scale * 0.5 * (a + a.adjoint());
}

}  // namespace

TEST_CASE("spin operators") {
  const auto ops2 = spin_operators_2();
  CHECK(std::real(ops2.sz(0, 0)) == Approx(0.5));
  CHECK(std::real(ops2.sz(1, 1)) == Approx(-0.5));
  CHECK(is_hermitian(ops2.sx));
  CHECK(is_hermitian(ops2.sy));

  const auto ops4 = spin_operators_4();
  const Mat4 comm = ops4.Sz * ops4.Iz - ops4.Iz * ops4.Sz;
  CHECK(comm.cwiseAbs().maxCoeff() == Approx(0.0).margin(1e-15));
  CHECK(std::abs((ops4.Sz * ops4.Ix).trace()) == Approx(0.0).margin(1e-15));
}

TEST_CASE("propagate: identity Hamiltonian leaves the state alone") {
  Density2 rho;
  rho.m << 0.7, cplx{0.1, 0.2}, cplx{0.1, -0.2}, 0.3;
  const auto out = propagate(rho, Mat2(Mat2::Zero()), 1.23);
  CHECK((out.m - rho.m).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("propagate: resonant pi pulse flips the spin") {
  const double rabi = from_hz(11.73e3);
  Density2 down;
  down.m << 0, 0, 0, 1;
  const auto up = propagate(down, Mat2(rabi * sx2()), 42.6e-6);
  CHECK(std::real(up.m(0, 0)) >= 0.999);
  up.validate();
}

TEST_CASE("propagate: z rotation matches the closed-form Bloch rotation") {
  Rng rng(7);
  Density2 plus_x;
  plus_x.m << 0.5, 0.5, 0.5, 0.5;
  for (int k = 0; k < 25; ++k) {
    const double delta = 1e4 * rng.normal();
    const double dt = 1e-4 * (1.0 + rng.uniform());
    const auto out = propagate(plus_x, Mat2(delta * sz2()), dt);
    const double angle = delta * dt;
    CHECK(2.0 * std::real(out.m(0, 1)) == Approx(std::cos(angle)).margin(1e-10));
    CHECK(-2.0 * std::imag(out.m(0, 1)) == Approx(std::sin(angle)).margin(1e-10));
  }
}

TEST_CASE("propagate composes over time") {
  Rng rng(11);
  const Mat4 h = random_hermitian4(rng, 1e5);
  Density4 rho = Density4::maximally_mixed();
  rho.m(0, 0) += 0.1;
  rho.m(1, 1) -= 0.1;
  const double t1 = 3.1e-6, t2 = 7.7e-6;
  const auto a = propagate(propagate(rho, h, t1), h, t2);
  const auto b = propagate(rho, h, t1 + t2);
  CHECK((a.m - b.m).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("propagate rejects a non-Hermitian Hamiltonian and negative time") {
  Density2 rho = Density2::maximally_mixed();
  Mat2 h;
  h << 0.0, 1.0, 0.5, 0.0;
  CHECK_THROWS_AS(propagate(rho, h, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(propagate(rho, Mat2(sz2()), -1.0), std::invalid_argument);
}

TEST_CASE("two-by-two propagator agrees with the eigendecomposition route") {
  Rng rng(13);
  for (int k = 0; k < 40; ++k) {
    Mat2 a;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) a(i, j) = cplx{rng.normal(), rng.normal()};
    const Mat2 h = 0.5e5 * (a + a.adjoint());
    const double t = 1e-5 * (0.5 + rng.uniform());
    const Mat2 u = expm_i(h, t);
    Eigen::SelfAdjointEigenSolver<Mat2> es(h);
    Vec2 ph;
    for (int i = 0; i < 2; ++i) ph(i) = std::exp(-ci * es.eigenvalues()(i) * t);
    const Mat2 u_ref = es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
    CHECK((u - u_ref).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(is_unitary(u));
  }
}

TEST_CASE("laser reset: bare-basis example and marginal preservation") {
  Vec4 up_up;
  up_up << 1, 0, 0, 0;  // |ue un>
  const auto rho = Density4::pure(up_up);
  const auto out = apply_laser_reset(rho, ElectronState::down);
  Vec4 dn_up;
  dn_up << 0, 0, 1, 0;
  CHECK(overlap(out, dn_up) == Approx(1.0).margin(1e-14));

  Rng rng(3);
  const Mat4 h = random_hermitian4(rng, 1.0);
  Eigen::SelfAdjointEigenSolver<Mat4> es(h);
  Density4 mixed;
  mixed.m = Mat4::Zero();
  const double w[4] = {0.4, 0.3, 0.2, 0.1};
  for (int i = 0; i < 4; ++i)
    mixed.m += w[i] * es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint();
  const auto reset = apply_laser_reset(mixed, ElectronState::up);
  CHECK(reset.trace_real() == Approx(1.0).margin(1e-13));
  CHECK((trace_out_electron(reset) - trace_out_electron(mixed)).cwiseAbs().maxCoeff() <
        1e-13);
  reset.validate();
}

TEST_CASE("laser reset is idempotent") {
  Rng rng(5);
  const Mat4 h = random_hermitian4(rng, 1.0);
  Eigen::SelfAdjointEigenSolver<Mat4> es(h);
  Density4 rho;
  rho.m = 0.25 * Mat4::Identity() + 0.1 * (es.eigenvectors().col(0) *
                                               es.eigenvectors().col(0).adjoint() -
                                           0.25 * Mat4::Identity());
  const Mat2 h_nuc = from_hz(1.2e6) * sx2() + from_hz(0.4e6) * sz2();
  const auto once = apply_laser_reset(rho, ElectronState::down, &h_nuc);
  const auto twice = apply_laser_reset(once, ElectronState::down, &h_nuc);
  CHECK((once.m - twice.m).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("nuclear dephasing equals an explicit random-phase average") {
  // Nuclear coherence fully off-axis: purity drops to 1/2.
  const double theta = 0.61;
  const Mat2 h_nuc =
      from_hz(1e6) * (std::sin(theta) * sx2() + std::cos(theta) * sz2());
  Eigen::SelfAdjointEigenSolver<Mat2> es(h_nuc);
  const Vec2 e0 = es.eigenvectors().col(0), e1 = es.eigenvectors().col(1);
  const Vec2 plus = (e0 + e1) / std::sqrt(2.0);  // |+x> along the manifold axis
  Mat2 rho_n = plus * plus.adjoint();

  const Mat2 dephased = dephase_in_eigenbasis(rho_n, h_nuc);
  CHECK(std::real((dephased * dephased).trace()) == Approx(0.5).margin(1e-12));

  Rng rng(21);
  Mat2 avg = Mat2::Zero();
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const double phi = two_pi * rng.uniform();
    Vec2 d;
    d << std::exp(-ci * 0.5 * phi), std::exp(ci * 0.5 * phi);
    const Mat2 u = es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
    avg += (u * rho_n * u.adjoint()) / static_cast<double>(n);
  }
  CHECK((avg - dephased).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("overlap basics") {
  Vec4 psi;
  psi << 0.5, 0.5, 0.5, 0.5;
  CHECK(overlap(Density4::pure(psi), psi) == Approx(1.0));
  CHECK(overlap(Density4::maximally_mixed(), psi) == Approx(0.25));
  Vec4 bad = 1.5 * psi;
  CHECK_THROWS_AS(overlap(Density4::maximally_mixed(), bad), std::invalid_argument);
}

TEST_CASE("density validation catches broken states") {
  Density2 rho;
  rho.m << 1.5, 0, 0, -0.5;
  CHECK_THROWS(rho.validate());
  rho.m << 0.5, 0.4, 0.2, 0.5;
  CHECK_THROWS(rho.validate());
}
