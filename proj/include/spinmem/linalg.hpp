#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <complex>
#include <stdexcept>

#include "spinmem/constants.hpp"

namespace spinmem {

using cplx = std::complex<double>;
using Mat2 = Eigen::Matrix2cd;
using Mat4 = Eigen::Matrix4cd;
using Vec2 = Eigen::Vector2cd;
using Vec4 = Eigen::Vector4cd;

constexpr cplx ci{0.0, 1.0};

// ---------------------------------------------------------------------------
// Spin-1/2 operators. Basis order for dim 4 is electron (x) nuclear, i.e.
// index = 2*e + n with e,n = 0 for up: |ue un>, |ue dn>, |de un>, |de dn>.
// ---------------------------------------------------------------------------

inline Mat2 pauli_x() { return (Mat2() << 0, 1, 1, 0).finished(); }
inline Mat2 pauli_y() { return (Mat2() << 0, -ci, ci, 0).finished(); }
inline Mat2 pauli_z() { return (Mat2() << 1, 0, 0, -1).finished(); }

inline Mat2 sx2() { return 0.5 * pauli_x(); }
inline Mat2 sy2() { return 0.5 * pauli_y(); }
inline Mat2 sz2() { return 0.5 * pauli_z(); }

inline Mat4 kron(const Mat2& a, const Mat2& b) {
  Mat4 out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return out;
}

// Electron operators S_j = sigma_j/2 (x) 1, nuclear operators I_j = 1 (x) sigma_j/2.
inline Mat4 Sx4() { return kron(sx2(), Mat2::Identity()); }
inline Mat4 Sy4() { return kron(sy2(), Mat2::Identity()); }
inline Mat4 Sz4() { return kron(sz2(), Mat2::Identity()); }
inline Mat4 Ix4() { return kron(Mat2::Identity(), sx2()); }
inline Mat4 Iy4() { return kron(Mat2::Identity(), sy2()); }
inline Mat4 Iz4() { return kron(Mat2::Identity(), sz2()); }

struct SpinOps2 {
  Mat2 sx, sy, sz;
};
struct SpinOps4 {
  Mat4 Sx, Sy, Sz, Ix, Iy, Iz;
};

inline SpinOps2 spin_operators_2() { return {sx2(), sy2(), sz2()}; }
inline SpinOps4 spin_operators_4() {
  return {Sx4(), Sy4(), Sz4(), Ix4(), Iy4(), Iz4()};
}

// ---------------------------------------------------------------------------
// Hermiticity / unitarity checks
// ---------------------------------------------------------------------------

template <typename M>
bool is_hermitian(const M& m, double tolerance = tol::hermitian) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tolerance;
}

template <typename M>
bool is_unitary(const M& m, double tolerance = tol::unitary) {
  const M d = m.adjoint() * m - M::Identity();
  return d.cwiseAbs().maxCoeff() <= tolerance;
}

// ---------------------------------------------------------------------------
// Propagators U = exp(-i H t)
// ---------------------------------------------------------------------------

// 2x2 via the Pauli decomposition H = a*1 + b.sigma (closed form).
inline Mat2 expm_i(const Mat2& h, double t) {
  const double a = 0.5 * std::real(h(0, 0) + h(1, 1));
  const double bx = std::real(h(0, 1));
  const double by = -std::imag(h(0, 1));
  const double bz = 0.5 * std::real(h(0, 0) - h(1, 1));
  const double b = std::sqrt(bx * bx + by * by + bz * bz);
  const cplx phase = std::exp(-ci * a * t);
  if (b * t == 0.0) return phase * Mat2::Identity();
  const double c = std::cos(b * t);
  const double s = std::sin(b * t);
  Mat2 u;
  u(0, 0) = c - ci * s * (bz / b);
  u(1, 1) = c + ci * s * (bz / b);
  u(0, 1) = -ci * s * (bx / b) - s * (by / b);
  u(1, 0) = -ci * s * (bx / b) + s * (by / b);
  return phase * u;
}

// 4x4 via Hermitian eigendecomposition.
inline Mat4 expm_i(const Mat4& h, double t) {
  Eigen::SelfAdjointEigenSolver<Mat4> es(h);
  const Eigen::Vector4d& w = es.eigenvalues();
  const Mat4& v = es.eigenvectors();
  Vec4 ph;
  for (int k = 0; k < 4; ++k) ph(k) = std::exp(-ci * w(k) * t);
  return v * ph.asDiagonal() * v.adjoint();
}

// ---------------------------------------------------------------------------
// Density matrices
// ---------------------------------------------------------------------------

template <int N>
struct DensityMatrix {
  using Mat = Eigen::Matrix<cplx, N, N>;
  Mat m = Mat::Zero();

  static DensityMatrix pure(const Eigen::Matrix<cplx, N, 1>& psi) {
    DensityMatrix rho;
    rho.m = psi * psi.adjoint();
    return rho;
  }

  static DensityMatrix maximally_mixed() {
    DensityMatrix rho;
    rho.m = Mat::Identity() / static_cast<double>(N);
    return rho;
  }

  double trace_real() const { return std::real(m.trace()); }

  // Enforces the state invariants; throws on violation.
  void validate() const {
    if (std::abs(m.trace() - cplx{1.0, 0.0}) > tol::trace)
      throw std::runtime_error("density matrix trace differs from 1");
    if (!is_hermitian(m, tol::hermitian))
      throw std::runtime_error("density matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol::psd)
      throw std::runtime_error("density matrix has a negative eigenvalue");
  }
};

using Density2 = DensityMatrix<2>;
using Density4 = DensityMatrix<4>;

template <int N, typename MatT>
DensityMatrix<N> propagate(const DensityMatrix<N>& rho, const MatT& h, double dt) {
  if (dt < 0.0) throw std::invalid_argument("propagate: dt must be >= 0");
  if (!is_hermitian(h)) throw std::invalid_argument("propagate: Hamiltonian not Hermitian");
  const MatT u = expm_i(h, dt);
  DensityMatrix<N> out;
  out.m = u * rho.m * u.adjoint();
  return out;
}

template <int N>
DensityMatrix<N> apply_unitary(const DensityMatrix<N>& rho,
                               const Eigen::Matrix<cplx, N, N>& u) {
  DensityMatrix<N> out;
  out.m = u * rho.m * u.adjoint();
  return out;
}

template <int N>
double overlap(const DensityMatrix<N>& rho, const Eigen::Matrix<cplx, N, 1>& psi) {
  if (std::abs(psi.norm() - 1.0) > tol::state_norm)
    throw std::invalid_argument("overlap: state vector not normalized");
  return std::real(psi.dot(rho.m * psi));
}

inline Mat2 trace_out_electron(const Density4& rho) {
  Mat2 n;
  n(0, 0) = rho.m(0, 0) + rho.m(2, 2);
  n(0, 1) = rho.m(0, 1) + rho.m(2, 3);
  n(1, 0) = rho.m(1, 0) + rho.m(3, 2);
  n(1, 1) = rho.m(1, 1) + rho.m(3, 3);
  return n;
}

inline Mat2 trace_out_nuclear(const Density4& rho) {
  Mat2 e;
  e(0, 0) = rho.m(0, 0) + rho.m(1, 1);
  e(0, 1) = rho.m(0, 2) + rho.m(1, 3);
  e(1, 0) = rho.m(2, 0) + rho.m(3, 1);
  e(1, 1) = rho.m(2, 2) + rho.m(3, 3);
  return e;
}

enum class ElectronState { up, down };

// Zeroes coherences of a 2x2 state in the eigenbasis of the given Hermitian
// generator; identical to averaging evolution over a uniform random phase.
inline Mat2 dephase_in_eigenbasis(const Mat2& rho_n, const Mat2& h) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(h);
  const Mat2& v = es.eigenvectors();
  Mat2 d = v.adjoint() * rho_n * v;
  d(0, 1) = 0.0;
  d(1, 0) = 0.0;
  return v * d * v.adjoint();
}

// Optical reset channel: the electron marginal becomes |target><target| while
// the nuclear marginal is preserved. When nuclear_h is non-null the nuclear
// state is additionally dephased in the eigenbasis of that (target-manifold)
// Hamiltonian, modelling free precession during a long laser pulse.
inline Density4 apply_laser_reset(const Density4& rho, ElectronState target,
                                  const Mat2* nuclear_h = nullptr) {
  Mat2 n = trace_out_electron(rho);
  if (nuclear_h != nullptr) n = dephase_in_eigenbasis(n, *nuclear_h);
  Mat2 e = Mat2::Zero();
  e(target == ElectronState::up ? 0 : 1, target == ElectronState::up ? 0 : 1) = 1.0;
  Density4 out;
  out.m = kron(e, n);
  return out;
}

}  // namespace spinmem
