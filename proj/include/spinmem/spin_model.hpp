#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "spinmem/constants.hpp"
#include "spinmem/linalg.hpp"

namespace spinmem {

// Physical parameters of the electron-nuclear pair. All couplings in rad/s,
// field in tesla, gyromagnetic ratios in rad/s per tesla.
struct SpinSystemParams {
  double a_zx = from_hz(602.81e3);
  double a_zz = from_hz(2862.34e3);
  double b_z = 97.159e-3;
  double gamma_n = gamma_n_c13;
  double gamma_e_eff = from_hz(31.6148e9);

  void validate() const {
    if (b_z <= 0.0) throw std::invalid_argument("b_z must be > 0");
    if (gamma_n <= 0.0) throw std::invalid_argument("gamma_n must be > 0");
    if (a_zx < 0.0) throw std::invalid_argument("a_zx must be >= 0 (sign convention)");
  }
};

enum class DriveChannel { mw, rf };

struct DriveParams {
  double rabi = 0.0;      // rad/s, >= 0
  double detuning = 0.0;  // rad/s
  double phase = 0.0;     // rad
  DriveChannel channel = DriveChannel::mw;
};

// Nuclear 2x2 Hamiltonian within a fixed electron manifold,
// H_n = hx*sigma_x/2 + hz*sigma_z/2.
inline Mat2 nuclear_hamiltonian(const SpinSystemParams& p, ElectronState e) {
  const double sign = (e == ElectronState::up) ? 1.0 : -1.0;
  const double hx = sign * 0.5 * p.a_zx;
  const double hz = sign * 0.5 * p.a_zz - p.gamma_n * p.b_z;
  return hx * sx2() + hz * sz2();
}

// Eigenstructure of both nuclear manifolds plus the MW transition layout.
//
// Nuclear eigenstates are labelled by their dominant bare component: |un> is
// the eigenvector with the larger |<bare up|v>|^2. Four-level eigenvectors
// follow the convention v1 = |de dn>, v2 = |de un>, v3 = |ue dn>, v4 = |ue un>;
// flipped partners are v_i' = (sigma_x (x) 1) v_i.
//
// MW transition frequencies are stored as offsets from the bare electron
// resonance gamma_e_eff * B_z. Transitions that preserve the bare nuclear
// label couple with the strong overlap; the label-flipping diagonals couple
// with the weak overlap and are the spin-pumping carriers.
struct ManifoldSpectrum {
  double omega_rf1 = 0.0;  // splitting of the down-electron manifold, rad/s
  double omega_rf2 = 0.0;  // splitting of the up-electron manifold, rad/s
  double theta_up = 0.0;   // polar angle of the up-manifold effective field
  double theta_down = 0.0;

  Vec2 n_up_in_up, n_dn_in_up;      // nuclear eigenvectors, up-electron manifold
  Vec2 n_up_in_down, n_dn_in_down;  // nuclear eigenvectors, down-electron manifold
  double e_up_in_up = 0.0;          // nuclear energies (rad/s) per label/manifold
  double e_dn_in_up = 0.0;
  double e_up_in_down = 0.0;
  double e_dn_in_down = 0.0;

  Vec4 v1, v2, v3, v4;
  Vec4 v1f, v2f, v3f, v4f;  // electron-flipped partners

  double strong_overlap = 0.0;  // |<label n (up mani)|label n (down mani)>|
  double weak_overlap = 0.0;    // cross-label overlap, enabled by A_zx

  double mw_offset_pump_v2 = 0.0;  // drives v1 <-> flipped v2; dark state v2
  double mw_offset_pump_v1 = 0.0;  // drives v2 <-> flipped v1; dark state v1
  double mw_offset_strong_dn = 0.0;  // bare-label-preserving lines
  double mw_offset_strong_up = 0.0;

  // Angle between the two quantization axes, folded to [0, pi/2].
  double axis_angle() const {
    double a = std::fabs(theta_up - theta_down);
    a = std::fmod(a, two_pi);
    if (a > pi) a = two_pi - a;
    return std::min(a, pi - a);
  }
};

inline ManifoldSpectrum manifold_spectrum(const SpinSystemParams& p) {
  p.validate();
  ManifoldSpectrum ms;
  const double gb = p.gamma_n * p.b_z;
  const double hx_up = 0.5 * p.a_zx;
  const double hz_up = 0.5 * p.a_zz - gb;
  const double hx_dn = -0.5 * p.a_zx;
  const double hz_dn = -0.5 * p.a_zz - gb;

  ms.omega_rf2 = std::hypot(hx_up, hz_up);
  ms.omega_rf1 = std::hypot(hx_dn, hz_dn);
  ms.theta_up = std::atan2(hx_up, hz_up);
  ms.theta_down = std::atan2(hx_dn, hz_dn);

  const auto eigvecs = [](double theta) {
    const double c = std::cos(0.5 * theta);
    const double s = std::sin(0.5 * theta);
    Vec2 aligned, anti;
    aligned << c, s;  // eigenvalue +omega/2
    anti << -s, c;    // eigenvalue -omega/2
    return std::pair<Vec2, Vec2>{aligned, anti};
  };

  const auto label = [&](double theta, double omega, Vec2& up, Vec2& dn,
                         double& e_up, double& e_dn) {
    auto [aligned, anti] = eigvecs(theta);
    if (std::norm(aligned(0)) >= std::norm(anti(0))) {
      up = aligned;
      dn = anti;
      e_up = 0.5 * omega;
      e_dn = -0.5 * omega;
    } else {
      up = anti;
      dn = aligned;
      e_up = -0.5 * omega;
      e_dn = 0.5 * omega;
    }
  };

  label(ms.theta_up, ms.omega_rf2, ms.n_up_in_up, ms.n_dn_in_up, ms.e_up_in_up,
        ms.e_dn_in_up);
  label(ms.theta_down, ms.omega_rf1, ms.n_up_in_down, ms.n_dn_in_down,
        ms.e_up_in_down, ms.e_dn_in_down);

  const Vec2 e_up_vec = (Vec2() << 1, 0).finished();
  const Vec2 e_dn_vec = (Vec2() << 0, 1).finished();
  const auto embed = [](const Vec2& e, const Vec2& n) {
    Vec4 v;
    v << e(0) * n(0), e(0) * n(1), e(1) * n(0), e(1) * n(1);
    return v;
  };
  ms.v1 = embed(e_dn_vec, ms.n_dn_in_down);
  ms.v2 = embed(e_dn_vec, ms.n_up_in_down);
  ms.v3 = embed(e_up_vec, ms.n_dn_in_up);
  ms.v4 = embed(e_up_vec, ms.n_up_in_up);
  const Mat4 flip = kron(pauli_x(), Mat2::Identity());
  ms.v1f = flip * ms.v1;
  ms.v2f = flip * ms.v2;
  ms.v3f = flip * ms.v3;
  ms.v4f = flip * ms.v4;

  ms.strong_overlap = std::abs(ms.n_up_in_up.dot(ms.n_up_in_down));
  ms.weak_overlap = std::abs(ms.n_up_in_up.dot(ms.n_dn_in_down));

  ms.mw_offset_pump_v2 = ms.e_up_in_up - ms.e_dn_in_down;
  ms.mw_offset_pump_v1 = ms.e_dn_in_up - ms.e_up_in_down;
  ms.mw_offset_strong_dn = ms.e_dn_in_up - ms.e_dn_in_down;
  ms.mw_offset_strong_up = ms.e_up_in_up - ms.e_up_in_down;
  return ms;
}

// Full four-level Hamiltonian in the electron rotating frame:
// H = (Delta + delta_extra) S_z + Omega (cos phi S_x + sin phi S_y)
//     - gamma_n B_z I_z + A_zx S_z I_x + A_zz S_z I_z.
inline Mat4 hamiltonian_full(const SpinSystemParams& p,
                             const std::optional<DriveParams>& drive,
                             double delta_extra = 0.0) {
  p.validate();
  double delta = delta_extra;
  double rabi = 0.0;
  double phase = 0.0;
  if (drive) {
    if (drive->rabi < 0.0) throw std::invalid_argument("rabi must be >= 0");
    delta += drive->detuning;
    rabi = drive->rabi;
    phase = drive->phase;
  }
  Mat4 h = delta * Sz4() - p.gamma_n * p.b_z * Iz4() +
           p.a_zx * (Sz4() * Ix4()) + p.a_zz * (Sz4() * Iz4());
  if (rabi != 0.0)
    h += rabi * (std::cos(phase) * Sx4() + std::sin(phase) * Sy4());
  return h;
}

// Reduced single-qubit Hamiltonian in the nuclear rotating frame:
// H1 = delta S_z + Omega (1 + eps) (cos phi S_x + sin phi S_y).
inline Mat2 hamiltonian_reduced(double delta, double rabi, double amp_error = 0.0,
                                double phase = 0.0) {
  if (std::fabs(amp_error) >= 1.0)
    throw std::invalid_argument("amp_error must satisfy |eps| < 1");
  const double w = rabi * (1.0 + amp_error);
  return delta * sz2() + w * (std::cos(phase) * sx2() + std::sin(phase) * sy2());
}

struct HyperfineCouplings {
  double a_zz = 0.0;
  double a_zx = 0.0;
};

// Inversion of the manifold splittings: recovers (A_zz, A_zx) from
// (omega_rf1, omega_rf2, B_z). The positive A_zx root is returned.
inline HyperfineCouplings hyperfine_from_frequencies(double omega_rf1,
                                                     double omega_rf2, double b_z,
                                                     double gamma_n = gamma_n_c13) {
  if (!(omega_rf1 > omega_rf2 && omega_rf2 > 0.0))
    throw std::invalid_argument("require omega_rf1 > omega_rf2 > 0");
  if (b_z <= 0.0 || gamma_n <= 0.0)
    throw std::invalid_argument("require b_z > 0 and gamma_n > 0");
  HyperfineCouplings out;
  const double gb = gamma_n * b_z;
  out.a_zz = (omega_rf1 * omega_rf1 - omega_rf2 * omega_rf2) / (2.0 * gb);
  const double r = out.a_zz - 2.0 * gb;
  double disc = 4.0 * omega_rf2 * omega_rf2 - r * r;
  const double scale = 4.0 * omega_rf2 * omega_rf2;
  if (disc < 0.0) {
    if (disc < -1e-12 * scale)
      throw std::invalid_argument(
          "inconsistent inputs: negative discriminant in A_zx inversion");
    disc = 0.0;
  }
  out.a_zx = std::sqrt(disc);
  return out;
}

}  // namespace spinmem
