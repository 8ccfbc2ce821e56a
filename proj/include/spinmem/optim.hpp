#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "spinmem/parallel.hpp"
#include "spinmem/rng.hpp"

namespace spinmem {

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;

// ---------------------------------------------------------------------------
// Differential evolution, DE/rand/1/bin with greedy selection.
// Trial vectors of a generation are evaluated as a batch so the result is
// deterministic and independent of how evaluations are scheduled.
// ---------------------------------------------------------------------------

struct DeSettings {
  int population = 64;
  int generations = 150;
  double weight = 0.7;     // F in [0.5, 1]
  double crossover = 0.9;  // CR in [0.7, 0.95]
  std::uint64_t seed = 1;
  int threads = 1;
};

struct DeResult {
  Eigen::VectorXd best;
  double best_value = std::numeric_limits<double>::infinity();
  long evaluations = 0;
};

inline DeResult differential_evolution(const ObjectiveFn& objective,
                                       const Eigen::VectorXd& lower,
                                       const Eigen::VectorXd& upper,
                                       const DeSettings& settings) {
  const int dim = static_cast<int>(lower.size());
  if (upper.size() != dim) throw std::invalid_argument("bound size mismatch");
  for (int d = 0; d < dim; ++d)
    if (!(lower(d) < upper(d)) || !std::isfinite(lower(d)) || !std::isfinite(upper(d)))
      throw std::invalid_argument("bounds must be finite with lower < upper");
  if (settings.population < 4) throw std::invalid_argument("population must be >= 4");

  const int np = settings.population;
  Rng rng = stream_rng(settings.seed, 0x4445);
  std::vector<Eigen::VectorXd> pop(np, Eigen::VectorXd(dim));
  for (auto& x : pop)
    for (int d = 0; d < dim; ++d)
      x(d) = lower(d) + (upper(d) - lower(d)) * rng.uniform();

  DeResult result;
  std::vector<double> values(np);
  parallel_for(static_cast<std::size_t>(np),
               [&](std::size_t i) { values[i] = objective(pop[i]); },
               settings.threads);
  result.evaluations += np;

  std::vector<Eigen::VectorXd> trials(np, Eigen::VectorXd(dim));
  std::vector<double> trial_values(np);
  for (int gen = 0; gen < settings.generations; ++gen) {
    for (int i = 0; i < np; ++i) {
      int r1, r2, r3;
      do { r1 = static_cast<int>(rng.next_u64() % np); } while (r1 == i);
      do { r2 = static_cast<int>(rng.next_u64() % np); } while (r2 == i || r2 == r1);
      do { r3 = static_cast<int>(rng.next_u64() % np); } while (r3 == i || r3 == r1 || r3 == r2);
      const int j_rand = static_cast<int>(rng.next_u64() % dim);
      Eigen::VectorXd& trial = trials[i];
      trial = pop[i];
      for (int d = 0; d < dim; ++d) {
        if (d == j_rand || rng.uniform() <= settings.crossover) {
          double v = pop[r1](d) + settings.weight * (pop[r2](d) - pop[r3](d));
          v = std::clamp(v, lower(d), upper(d));
          trial(d) = v;
        }
      }
    }
    parallel_for(static_cast<std::size_t>(np),
                 [&](std::size_t i) { trial_values[i] = objective(trials[i]); },
                 settings.threads);
    result.evaluations += np;
    for (int i = 0; i < np; ++i) {
      if (trial_values[i] <= values[i]) {
        pop[i] = trials[i];
        values[i] = trial_values[i];
      }
    }
  }

  int best_i = 0;
  for (int i = 1; i < np; ++i)
    if (values[i] < values[best_i]) best_i = i;
  result.best = pop[best_i];
  result.best_value = values[best_i];
  return result;
}

// ---------------------------------------------------------------------------
// Nelder-Mead direct search with restart on simplex collapse.
// ---------------------------------------------------------------------------

struct NmSettings {
  long max_evals = 400;
  double f_tol = 1e-10;
  double x_tol = 1e-10;
  int max_restarts = 2;
};

struct NmResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  long evaluations = 0;
};

inline NmResult nelder_mead(const ObjectiveFn& objective, const Eigen::VectorXd& start,
                            const Eigen::VectorXd& scale, const NmSettings& settings) {
  const int n = static_cast<int>(start.size());
  if (scale.size() != n) throw std::invalid_argument("scale size mismatch");

  NmResult result;
  result.x = start;
  result.value = objective(start);
  result.evaluations = 1;

  Eigen::VectorXd current_scale = scale;
  for (int restart = 0; restart <= settings.max_restarts; ++restart) {
    std::vector<Eigen::VectorXd> simplex(n + 1, result.x);
    std::vector<double> f(n + 1);
    f[0] = result.value;
    for (int i = 1; i <= n; ++i) {
      simplex[i](i - 1) += current_scale(i - 1);
      f[i] = objective(simplex[i]);
      ++result.evaluations;
    }

    while (result.evaluations < settings.max_evals) {
      std::vector<int> order(n + 1);
      for (int i = 0; i <= n; ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](int a, int b) { return f[a] < f[b]; });
      const int lo = order[0], hi = order[n], second_hi = order[n - 1];

      if (std::fabs(f[hi] - f[lo]) <= settings.f_tol) break;
      double spread = 0.0;
      for (int i = 0; i <= n; ++i)
        spread = std::max(spread, (simplex[i] - simplex[lo]).cwiseAbs().maxCoeff());
      if (spread <= settings.x_tol) break;

      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (int i = 0; i <= n; ++i)
        if (i != hi) centroid += simplex[i];
      centroid /= n;

      const auto eval = [&](const Eigen::VectorXd& x) {
        ++result.evaluations;
        return objective(x);
      };

      Eigen::VectorXd reflected = centroid + (centroid - simplex[hi]);
      const double fr = eval(reflected);
      if (fr < f[lo]) {
        Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[hi]);
        const double fe = eval(expanded);
        if (fe < fr) {
          simplex[hi] = expanded;
          f[hi] = fe;
        } else {
          simplex[hi] = reflected;
          f[hi] = fr;
        }
      } else if (fr < f[second_hi]) {
        simplex[hi] = reflected;
        f[hi] = fr;
      } else {
        Eigen::VectorXd contracted = centroid + 0.5 * (simplex[hi] - centroid);
        const double fc = eval(contracted);
        if (fc < f[hi]) {
          simplex[hi] = contracted;
          f[hi] = fc;
        } else {
          for (int i = 0; i <= n; ++i) {
            if (i == lo) continue;
            simplex[i] = simplex[lo] + 0.5 * (simplex[i] - simplex[lo]);
            f[i] = eval(simplex[i]);
          }
        }
      }
    }

    int lo = 0;
    for (int i = 1; i <= n; ++i)
      if (f[i] < f[lo]) lo = i;
    if (f[lo] < result.value) {
      result.value = f[lo];
      result.x = simplex[lo];
    }
    if (result.evaluations >= settings.max_evals) break;
    current_scale *= 0.5;
  }
  return result;
}

// ---------------------------------------------------------------------------
// CMA-ES (mu/mu_w, lambda) with full covariance adaptation. Coordinates are
// normalized by the per-parameter scale vector. Used as the derivative-free
// inner search of the pulse optimizer, where it is markedly more reliable
// than a simplex on the ill-conditioned control landscape.
// ---------------------------------------------------------------------------

struct CmaSettings {
  long max_evals = 1000;
  double sigma0 = 0.5;  // initial step in scale units
  double f_tol = 1e-12;
  std::uint64_t seed = 1;
};

struct CmaResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  long evaluations = 0;
};

inline CmaResult cma_es(const ObjectiveFn& objective, const Eigen::VectorXd& start,
                        const Eigen::VectorXd& scale, const CmaSettings& settings) {
  const int n = static_cast<int>(start.size());
  if (scale.size() != n) throw std::invalid_argument("scale size mismatch");

  const auto denorm = [&](const Eigen::VectorXd& y) {
    return Eigen::VectorXd(start + y.cwiseProduct(scale));
  };

  CmaResult result;
  result.x = start;
  result.value = objective(start);
  result.evaluations = 1;

  const int lambda = 4 + static_cast<int>(3.0 * std::log(static_cast<double>(n)));
  const int mu = lambda / 2;
  Eigen::VectorXd w(mu);
  for (int i = 0; i < mu; ++i) w(i) = std::log(mu + 0.5) - std::log(i + 1.0);
  w /= w.sum();
  const double mu_eff = 1.0 / w.squaredNorm();
  const double cc = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
  const double cs = (mu_eff + 2.0) / (n + mu_eff + 5.0);
  const double c1 = 2.0 / ((n + 1.3) * (n + 1.3) + mu_eff);
  const double cmu = std::min(1.0 - c1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) /
                                            ((n + 2.0) * (n + 2.0) + mu_eff));
  const double damps =
      1.0 + 2.0 * std::max(0.0, std::sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + cs;
  const double chi_n = std::sqrt(static_cast<double>(n)) *
                       (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  double sigma = settings.sigma0;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd pc = Eigen::VectorXd::Zero(n), ps = Eigen::VectorXd::Zero(n);
  Rng rng = stream_rng(settings.seed, 0xce5);

  std::vector<Eigen::VectorXd> ys(static_cast<std::size_t>(lambda)),
      zs(static_cast<std::size_t>(lambda));
  std::vector<double> fs(static_cast<std::size_t>(lambda));
  std::vector<int> order(static_cast<std::size_t>(lambda));
  long gen = 0;

  while (result.evaluations + lambda <= settings.max_evals) {
    ++gen;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    Eigen::VectorXd d = es.eigenvalues().cwiseMax(1e-20).cwiseSqrt();
    const Eigen::MatrixXd& b = es.eigenvectors();
    const Eigen::MatrixXd bd = b * d.asDiagonal();

    for (int k = 0; k < lambda; ++k) {
      Eigen::VectorXd z(n);
      for (int i = 0; i < n; ++i) z(i) = rng.normal();
      zs[static_cast<std::size_t>(k)] = z;
      ys[static_cast<std::size_t>(k)] = mean + sigma * (bd * z);
      fs[static_cast<std::size_t>(k)] = objective(denorm(ys[static_cast<std::size_t>(k)]));
      ++result.evaluations;
    }
    for (int k = 0; k < lambda; ++k) order[static_cast<std::size_t>(k)] = k;
    std::sort(order.begin(), order.end(),
              [&](int a, int c) { return fs[static_cast<std::size_t>(a)] < fs[static_cast<std::size_t>(c)]; });
    if (fs[static_cast<std::size_t>(order[0])] < result.value) {
      result.value = fs[static_cast<std::size_t>(order[0])];
      result.x = denorm(ys[static_cast<std::size_t>(order[0])]);
    }

    Eigen::VectorXd mean_old = mean;
    Eigen::VectorXd zw = Eigen::VectorXd::Zero(n);
    mean.setZero();
    for (int i = 0; i < mu; ++i) {
      mean += w(i) * ys[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
      zw += w(i) * zs[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    }
    ps = (1.0 - cs) * ps + std::sqrt(cs * (2.0 - cs) * mu_eff) * (b * zw);
    const double hsig =
        (ps.norm() / std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * gen)) / chi_n <
         1.4 + 2.0 / (n + 1.0))
            ? 1.0
            : 0.0;
    pc = (1.0 - cc) * pc +
         hsig * std::sqrt(cc * (2.0 - cc) * mu_eff) * (mean - mean_old) / sigma;

    Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < mu; ++i) {
      const Eigen::VectorXd yk =
          (ys[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] - mean_old) / sigma;
      rank_mu += w(i) * yk * yk.transpose();
    }
    cov = (1.0 - c1 - cmu) * cov +
          c1 * (pc * pc.transpose() + (1.0 - hsig) * cc * (2.0 - cc) * cov) +
          cmu * rank_mu;
    sigma *= std::exp((cs / damps) * (ps.norm() / chi_n - 1.0));
    if (!std::isfinite(sigma) || sigma < 1e-14) break;
    if (fs[static_cast<std::size_t>(order[static_cast<std::size_t>(lambda - 1)])] -
            fs[static_cast<std::size_t>(order[0])] <
        settings.f_tol)
      break;
  }
  return result;
}

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LmSettings {
  int max_iterations = 200;
  double f_tol = 1e-12;
  double step_tol = 1e-12;
  double lambda0 = 1e-3;
};

struct LmResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;  // (J^T J)^{-1} * s^2
  double rss = 0.0;
  bool converged = false;
  long evaluations = 0;
};

inline Eigen::MatrixXd fd_jacobian(const ResidualFn& fn, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& r0, long& evals) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd j(r0.size(), n);
  for (int d = 0; d < n; ++d) {
    const double h = 1e-7 * std::max(1.0, std::fabs(x(d)));
    Eigen::VectorXd xp = x;
    xp(d) += h;
    j.col(d) = (fn(xp) - r0) / h;
    ++evals;
  }
  return j;
}

inline LmResult levenberg_marquardt(const ResidualFn& residuals,
                                    const Eigen::VectorXd& start,
                                    const LmSettings& settings = {}) {
  LmResult result;
  result.params = start;
  Eigen::VectorXd r = residuals(start);
  result.evaluations = 1;
  double rss = r.squaredNorm();
  double lambda = settings.lambda0;
  const int n = static_cast<int>(start.size());

  for (int it = 0; it < settings.max_iterations; ++it) {
    const Eigen::MatrixXd j = fd_jacobian(residuals, result.params, r, result.evaluations);
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * r;
    bool stepped = false;
    for (int tries = 0; tries < 25; ++tries) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-30);
      const Eigen::VectorXd step = a.ldlt().solve(-g);
      const Eigen::VectorXd trial = result.params + step;
      const Eigen::VectorXd rt = residuals(trial);
      ++result.evaluations;
      const double rss_t = rt.squaredNorm();
      if (rss_t < rss) {
        const double rel = (rss - rss_t) / std::max(rss, 1e-300);
        const double step_size = step.cwiseAbs().maxCoeff();
        result.params = trial;
        r = rt;
        rss = rss_t;
        lambda = std::max(lambda * 0.33, 1e-12);
        stepped = true;
        if (rel < settings.f_tol || step_size < settings.step_tol) {
          result.converged = true;
          it = settings.max_iterations;
        }
        break;
      }
      lambda *= 4.0;
    }
    if (!stepped) {
      result.converged = true;  // local minimum to within trust-region resolution
      break;
    }
  }

  result.rss = rss;
  const Eigen::MatrixXd j = fd_jacobian(residuals, result.params, r, result.evaluations);
  Eigen::MatrixXd jtj = j.transpose() * j;
  const long dof = static_cast<long>(r.size()) - n;
  const double s2 = dof > 0 ? rss / static_cast<double>(dof) : 0.0;
  jtj.diagonal() += Eigen::VectorXd::Constant(n, 1e-300);
  result.covariance = jtj.inverse() * s2;
  return result;
}

}  // namespace spinmem
