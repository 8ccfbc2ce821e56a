#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "spinmem/optim.hpp"
#include "spinmem/sequences.hpp"
#include "spinmem/spin_model.hpp"

namespace spinmem {

inline double r_squared(const std::vector<double>& data,
                        const std::vector<double>& model) {
  if (data.size() != model.size() || data.empty())
    throw std::invalid_argument("r_squared: size mismatch");
  double mean = 0.0;
  for (double d : data) mean += d;
  mean /= static_cast<double>(data.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    ss_res += (data[i] - model[i]) * (data[i] - model[i]);
    ss_tot += (data[i] - mean) * (data[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - ss_res / ss_tot;
}

// ---------------------------------------------------------------------------
// Global ODMR fit: shared effective gyromagnetic ratio, per-spectrum field and
// initial nuclear population. The hyperfine couplings are reconstructed from
// (omega_rf1, omega_rf2, B_i) at every evaluation, so the nuclear transition
// frequencies stay pinned to their measured values.
// ---------------------------------------------------------------------------

struct OdmrFixedInputs {
  double omega_rf1 = from_hz(2489.73e3);
  double omega_rf2 = from_hz(493.62e3);
  double gamma_n = gamma_n_c13;
  double mw_rabi = from_hz(349e3);
  double t_pi = pi / from_hz(349e3);
  double sigma_delta_e = from_hz(146e3);
  int n_avg = 200;
};

struct OdmrSpectrumData {
  ElectronState manifold = ElectronState::down;
  std::vector<double> freq_hz;  // in sweep order (ascending or descending)
  std::vector<double> signal;

  bool descending() const {
    return freq_hz.size() > 1 && freq_hz.back() < freq_hz.front();
  }
};

struct OdmrModelParams {
  double gamma_e_eff = from_hz(31.6148e9);  // shared across spectra
  std::array<double, 4> b{};                // tesla, one per spectrum
  std::array<double, 4> p_up{};             // initial up-nucleus population
};

struct OdmrBounds {
  double gamma_lo = from_hz(31.30e9), gamma_hi = from_hz(31.95e9);
  double b_lo = 95.5e-3, b_hi = 99.0e-3;
};

struct OdmrSpectrumFit {
  double b = 0.0;
  double p_up = 0.0;
  double gamma_e_eff = 0.0;  // after the product-constrained refinement
  double b_stderr = 0.0;
  double p_stderr = 0.0;
  double r2 = 0.0;
};

struct OdmrFitResult {
  double gamma_e_eff_shared = 0.0;  // differential-evolution estimate
  std::vector<OdmrSpectrumFit> spectra;
  double a_zz_mean = 0.0;
  double a_zx_mean = 0.0;
  double a_zz_spread = 0.0;  // max - min over spectra
  double a_zx_spread = 0.0;
  long evaluations = 0;
  bool r2_warning = false;  // set when any spectrum stays below the threshold
};

namespace detail {

// Simulates one model spectrum via the exact infinite-average engine
// (simulate_odmr_mean), so the fit objective is deterministic and carries no
// Monte Carlo noise of its own; residuals are data noise only.
class OdmrModelSim {
 public:
  OdmrModelSim(OdmrFixedInputs fixed, std::vector<OdmrSpectrumData> data,
               int quad_nodes, int threads)
      : fixed_(fixed),
        data_(std::move(data)),
        quad_nodes_(quad_nodes),
        threads_(threads) {}

  const std::vector<OdmrSpectrumData>& data() const { return data_; }

  std::vector<double> simulate(std::size_t spectrum, double gamma_e, double b,
                               double p_up) const {
    const std::uint64_t key = hash_key(spectrum, gamma_e, b, p_up);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return *it->second;
    }
    OdmrRunParams prm;
    const HyperfineCouplings hf =
        hyperfine_from_frequencies(fixed_.omega_rf1, fixed_.omega_rf2, b, fixed_.gamma_n);
    prm.sys.a_zx = hf.a_zx;
    prm.sys.a_zz = hf.a_zz;
    prm.sys.b_z = b;
    prm.sys.gamma_n = fixed_.gamma_n;
    prm.sys.gamma_e_eff = gamma_e;
    prm.gamma_e_eff = gamma_e;
    prm.manifold = data_[spectrum].manifold;
    prm.p_up_init = p_up;
    prm.mw_rabi = fixed_.mw_rabi;
    prm.t_pi = fixed_.t_pi;
    prm.delta_e = OUParams{fixed_.sigma_delta_e, 1.0};
    prm.threads = threads_;
    auto out = std::make_shared<std::vector<double>>(
        simulate_odmr_mean(data_[spectrum].freq_hz, prm, quad_nodes_).signal);
    std::lock_guard<std::mutex> lock(mutex_);
    cache_.emplace(key, out);
    return *out;
  }

  double ssr(std::size_t spectrum, double gamma_e, double b, double p_up) const {
    const auto model = simulate(spectrum, gamma_e, b, p_up);
    const auto& y = data_[spectrum].signal;
    double s = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k)
      s += (model[k] - y[k]) * (model[k] - y[k]);
    return s;
  }

 private:
  static std::uint64_t hash_key(std::size_t spectrum, double a, double b, double c) {
    const auto mix = [](std::uint64_t h, double v) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      h ^= bits + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      return h;
    };
    std::uint64_t h = 0x243f6a8885a308d3ULL + spectrum;
    h = mix(h, a);
    h = mix(h, b);
    return mix(h, c);
  }

  OdmrFixedInputs fixed_;
  std::vector<OdmrSpectrumData> data_;
  int quad_nodes_;
  int threads_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::uint64_t, std::shared_ptr<std::vector<double>>> cache_;
};

}  // namespace detail

struct OdmrFitSettings {
  OdmrBounds bounds{};
  DeSettings de{24, 40, 0.7, 0.9, 1, 1};
  long refine_evals = 300;  // Nelder-Mead budget per spectrum
  double r2_threshold = 0.9;
  double center_window_hz = 400e3;  // product search window around the estimate
  int quadrature_nodes = 20;        // detuning-average quadrature order
  int threads = 1;
};

struct SpectrumRefineResult {
  double b = 0.0;
  double p_up = 0.0;
  double gamma_e_eff = 0.0;
  double ssr = 0.0;
  long evaluations = 0;
};

// Constrained local refinement of a single spectrum: minimizes its squared
// residuals over (B, p_up) while the product gamma_e_eff * B stays fixed
// (gamma = product / B), which removes the line-center degeneracy.
inline SpectrumRefineResult refine_least_squares(const detail::OdmrModelSim& sim,
                                                 std::size_t spectrum, double product,
                                                 double b_start, double p_start,
                                                 const OdmrBounds& bounds,
                                                 long max_evals = 300) {
  const auto clamp_b = [&](double b) { return std::clamp(b, bounds.b_lo, bounds.b_hi); };
  const auto local = [&](const Eigen::VectorXd& x) {
    const double b = clamp_b(x(0));
    const double p = std::clamp(x(1), 0.0, 1.0);
    return sim.ssr(spectrum, product / b, b, p);
  };
  // The global stage pins the line center but can leave B anywhere along the
  // product ridge, so the local search must be able to travel a few tenths
  // of a percent in B.
  Eigen::VectorXd x0(2), scale(2);
  x0 << b_start, p_start;
  scale << 2.5e-4, 0.04;
  NmSettings nm;
  nm.max_evals = max_evals;
  nm.max_restarts = 2;
  const NmResult ref = nelder_mead(local, x0, scale, nm);
  SpectrumRefineResult out;
  out.b = clamp_b(ref.x(0));
  out.p_up = std::clamp(ref.x(1), 0.0, 1.0);
  out.gamma_e_eff = product / out.b;
  out.ssr = ref.value;
  out.evaluations = ref.evaluations;
  return out;
}

// Estimates the bare electron resonance of a spectrum from the two strong
// dips, which sit at known offsets +-(omega_rf1 + omega_rf2)/2 around it.
inline double estimate_center_hz(const OdmrSpectrumData& d, double omega_rf1,
                                 double omega_rf2) {
  std::vector<double> f = d.freq_hz;
  std::vector<double> y = d.signal;
  if (d.descending()) {
    std::reverse(f.begin(), f.end());
    std::reverse(y.begin(), y.end());
  }
  double baseline = 0.0;
  for (double v : y) baseline = std::max(baseline, v);
  const auto depth = [&](double freq) {
    if (freq <= f.front() || freq >= f.back()) return 0.0;
    const auto it = std::lower_bound(f.begin(), f.end(), freq);
    const std::size_t hi = static_cast<std::size_t>(it - f.begin());
    const std::size_t lo = hi - 1;
    const double w = (freq - f[lo]) / (f[hi] - f[lo]);
    const double s = (1.0 - w) * y[lo] + w * y[hi];
    return std::max(0.0, baseline - s);
  };
  const double off = 0.5 * to_hz(omega_rf1 + omega_rf2);
  const double step = 0.25 * (f.back() - f.front()) / static_cast<double>(f.size());
  double best_c = 0.5 * (f.front() + f.back());
  double best_score = -1.0;
  for (double c = f.front(); c <= f.back(); c += step) {
    const double score = depth(c - off) + depth(c + off);
    if (score > best_score) {
      best_score = score;
      best_c = c;
    }
  }
  return best_c;
}

// Two-stage fit: differential evolution over the shared gamma_e_eff plus
// per-spectrum (B_i, p_i), then a per-spectrum local refinement that keeps the
// product gamma_e_eff * B_i fixed (gamma = c_i / B_i while B_i moves).
inline OdmrFitResult fit_odmr(const std::vector<OdmrSpectrumData>& spectra,
                              const OdmrFixedInputs& fixed,
                              const OdmrFitSettings& settings = {}) {
  if (spectra.empty() || spectra.size() > 4)
    throw std::invalid_argument("fit_odmr expects 1 to 4 spectra");
  for (const auto& s : spectra)
    if (s.freq_hz.size() != s.signal.size() || s.freq_hz.size() < 8)
      throw std::invalid_argument("spectrum needs at least 8 points");

  detail::OdmrModelSim sim(fixed, spectra, settings.quadrature_nodes, settings.threads);
  const std::size_t ns = spectra.size();

  // The dips only overlap the data when the line-center product
  // gamma_e_eff * B_i is right to a fraction of a linewidth, which makes a
  // direct (gamma, B) box almost entirely flat. The global stage therefore
  // searches (gamma, product_i, p_i) with the product window anchored on a
  // dip-pair center estimate; B_i = product_i / gamma throughout.
  const int dim = 1 + 2 * static_cast<int>(ns);
  Eigen::VectorXd lo(dim), hi(dim);
  lo(0) = settings.bounds.gamma_lo;
  hi(0) = settings.bounds.gamma_hi;
  for (std::size_t i = 0; i < ns; ++i) {
    const double center =
        estimate_center_hz(spectra[i], fixed.omega_rf1, fixed.omega_rf2);
    lo(1 + 2 * static_cast<int>(i)) = two_pi * (center - settings.center_window_hz);
    hi(1 + 2 * static_cast<int>(i)) = two_pi * (center + settings.center_window_hz);
    lo(2 + 2 * static_cast<int>(i)) = 0.0;
    hi(2 + 2 * static_cast<int>(i)) = 1.0;
  }
  const auto clamp_b = [&](double b) {
    return std::clamp(b, settings.bounds.b_lo, settings.bounds.b_hi);
  };
  const auto objective = [&](const Eigen::VectorXd& x) {
    double total = 0.0;
    for (std::size_t i = 0; i < ns; ++i) {
      const double b = clamp_b(x(1 + 2 * static_cast<int>(i)) / x(0));
      total += sim.ssr(i, x(0), b, x(2 + 2 * static_cast<int>(i)));
    }
    return total;
  };
  const DeResult de = differential_evolution(objective, lo, hi, settings.de);

  OdmrFitResult result;
  result.gamma_e_eff_shared = de.best(0);
  result.evaluations = de.evaluations;

  std::vector<double> a_zz(ns), a_zx(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    const double b_de = clamp_b(de.best(1 + 2 * static_cast<int>(i)) / de.best(0));
    const double p_de = de.best(2 + 2 * static_cast<int>(i));
    const double product = result.gamma_e_eff_shared * b_de;  // kept constant

    const SpectrumRefineResult ref = refine_least_squares(
        sim, i, product, b_de, p_de, settings.bounds, settings.refine_evals);
    result.evaluations += ref.evaluations;

    OdmrSpectrumFit fit;
    fit.b = ref.b;
    fit.p_up = ref.p_up;
    fit.gamma_e_eff = ref.gamma_e_eff;

    const auto model = sim.simulate(i, fit.gamma_e_eff, fit.b, fit.p_up);
    fit.r2 = r_squared(spectra[i].signal, model);

    // Linearized standard errors from a finite-difference Jacobian of the
    // model with respect to (B, p) at the optimum.
    {
      const double db = 2e-6 * fit.b;
      const double dp = 1e-3;
      const auto m_b = sim.simulate(i, product / (fit.b + db), fit.b + db, fit.p_up);
      const auto m_p = sim.simulate(i, fit.gamma_e_eff, fit.b,
                                    std::min(1.0, fit.p_up + dp));
      const std::size_t nk = model.size();
      Eigen::MatrixXd j(static_cast<long>(nk), 2);
      Eigen::VectorXd r(static_cast<long>(nk));
      for (std::size_t k = 0; k < nk; ++k) {
        j(static_cast<long>(k), 0) = (m_b[k] - model[k]) / db;
        j(static_cast<long>(k), 1) = (m_p[k] - model[k]) / dp;
        r(static_cast<long>(k)) = model[k] - spectra[i].signal[k];
      }
      const double s2 = r.squaredNorm() / std::max<double>(1.0, nk - 2.0);
      Eigen::Matrix2d jtj = (j.transpose() * j);
      jtj.diagonal().array() += 1e-300;
      const Eigen::Matrix2d cov = jtj.inverse() * s2;
      fit.b_stderr = std::sqrt(std::max(0.0, cov(0, 0)));
      fit.p_stderr = std::sqrt(std::max(0.0, cov(1, 1)));
    }
    if (fit.r2 < settings.r2_threshold) result.r2_warning = true;

    const HyperfineCouplings hf = hyperfine_from_frequencies(
        fixed.omega_rf1, fixed.omega_rf2, fit.b, fixed.gamma_n);
    a_zz[i] = hf.a_zz;
    a_zx[i] = hf.a_zx;
    result.spectra.push_back(fit);
  }

  double zz_min = a_zz[0], zz_max = a_zz[0], zx_min = a_zx[0], zx_max = a_zx[0];
  for (std::size_t i = 0; i < ns; ++i) {
    result.a_zz_mean += a_zz[i] / static_cast<double>(ns);
    result.a_zx_mean += a_zx[i] / static_cast<double>(ns);
    zz_min = std::min(zz_min, a_zz[i]);
    zz_max = std::max(zz_max, a_zz[i]);
    zx_min = std::min(zx_min, a_zx[i]);
    zx_max = std::max(zx_max, a_zx[i]);
  }
  result.a_zz_spread = zz_max - zz_min;
  result.a_zx_spread = zx_max - zx_min;
  return result;
}

}  // namespace spinmem
