// spinmem command-line tool: simulation, fitting and analysis of a driven
// electron-nuclear spin pair under Ornstein-Uhlenbeck noise.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "spinmem/spinmem.hpp"

namespace sm = spinmem;
using sm::from_hz;
using sm::json;
using sm::to_hz;

namespace {

struct FitFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string g_config_path;  // set by --config; values are flag-overridable

const json& config() {
  static json loaded;
  static bool done = false;
  if (!done) {
    done = true;
    if (!g_config_path.empty()) {
      std::ifstream in(g_config_path);
      if (!in) throw std::invalid_argument("cannot open config: " + g_config_path);
      in >> loaded;
    }
  }
  return loaded;
}

// Fills a bound variable from the config file unless the flag was given.
// Keys may live at the top level or inside the "system"/"noise" groups, so an
// emitted sidecar's config echo re-ingests directly.
template <typename T>
void from_config(const CLI::Option* opt, const std::string& key, T& value) {
  if (opt != nullptr && opt->count() > 0) return;
  const json& cfg = config();
  if (cfg.contains(key)) {
    value = cfg.at(key).get<T>();
    return;
  }
  for (const char* group : {"system", "noise"})
    if (cfg.contains(group) && cfg.at(group).contains(key)) {
      value = cfg.at(group).at(key).get<T>();
      return;
    }
}

struct SystemFlags {
  double a_zx_hz = to_hz(sm::SpinSystemParams{}.a_zx);
  double a_zz_hz = to_hz(sm::SpinSystemParams{}.a_zz);
  double b_mt = 97.159;
  double gamma_n_hz_per_t = to_hz(sm::gamma_n_c13);
  double gamma_e_ghz_per_t = 31.6148;
  CLI::Option *o_azx = nullptr, *o_azz = nullptr, *o_b = nullptr, *o_gn = nullptr,
              *o_ge = nullptr;

  void add(CLI::App* cmd) {
    o_azx = cmd->add_option("--azx-hz", a_zx_hz, "Hyperfine A_zx in Hz");
    o_azz = cmd->add_option("--azz-hz", a_zz_hz, "Hyperfine A_zz in Hz");
    o_b = cmd->add_option("--b-mt", b_mt, "Magnetic field in mT");
    o_gn = cmd->add_option("--gamma-n-hz-per-t", gamma_n_hz_per_t,
                           "Nuclear gyromagnetic ratio in Hz/T");
    o_ge = cmd->add_option("--gamma-e-ghz-per-t", gamma_e_ghz_per_t,
                           "Effective electron gyromagnetic ratio in GHz/T");
  }

  sm::SpinSystemParams params() {
    from_config(o_azx, "a_zx_hz", a_zx_hz);
    from_config(o_azz, "a_zz_hz", a_zz_hz);
    from_config(o_b, "b_mt", b_mt);
    from_config(o_gn, "gamma_n_hz_per_t", gamma_n_hz_per_t);
    from_config(o_ge, "gamma_e_ghz_per_t", gamma_e_ghz_per_t);
    sm::SpinSystemParams p;
    p.a_zx = from_hz(a_zx_hz);
    p.a_zz = from_hz(a_zz_hz);
    p.b_z = b_mt * 1e-3;
    p.gamma_n = from_hz(gamma_n_hz_per_t);
    p.gamma_e_eff = from_hz(gamma_e_ghz_per_t * 1e9);
    return p;
  }

  json echo() const {
    return json{{"a_zx_hz", a_zx_hz},
                {"a_zz_hz", a_zz_hz},
                {"b_mt", b_mt},
                {"gamma_n_hz_per_t", gamma_n_hz_per_t},
                {"gamma_e_ghz_per_t", gamma_e_ghz_per_t}};
  }
};

struct NoiseFlags {
  double sigma_delta_hz = 112.5;
  double tau_c_s = 829.0;
  double sigma_eps = 0.005;
  double tau_omega_us = 500.0;
  CLI::Option *o_sd = nullptr, *o_tc = nullptr, *o_se = nullptr, *o_to = nullptr;

  void add(CLI::App* cmd) {
    o_sd = cmd->add_option("--sigma-delta-hz", sigma_delta_hz,
                           "Detuning noise std dev in Hz");
    o_tc = cmd->add_option("--tau-c-s", tau_c_s, "Detuning noise correlation time in s");
    o_se = cmd->add_option("--sigma-eps", sigma_eps, "Relative amplitude noise std dev");
    o_to = cmd->add_option("--tau-omega-us", tau_omega_us,
                           "Amplitude noise correlation time in us");
  }

  sm::NoiseChannels channels() {
    from_config(o_sd, "sigma_delta_hz", sigma_delta_hz);
    from_config(o_tc, "tau_c_s", tau_c_s);
    from_config(o_se, "sigma_eps", sigma_eps);
    from_config(o_to, "tau_omega_us", tau_omega_us);
    sm::NoiseChannels n;
    n.delta = {from_hz(sigma_delta_hz), tau_c_s};
    n.epsilon = {sigma_eps, tau_omega_us * 1e-6};
    return n;
  }

  json echo() const {
    return json{{"sigma_delta_hz", sigma_delta_hz},
                {"tau_c_s", tau_c_s},
                {"sigma_eps", sigma_eps},
                {"tau_omega_us", tau_omega_us}};
  }
};

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> xs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    xs[static_cast<std::size_t>(i)] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1.0);
  return xs;
}

int run_app(int argc, char** argv) {
  CLI::App app{"spinmem: driven electron-nuclear spin pair simulation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags (--config, --threads) usable after subcommands

  app.add_option("--config", g_config_path, "JSON configuration file")
      ->check(CLI::ExistingFile);
  int threads = sm::default_thread_count();
  app.add_option("--threads,-j", threads, "Worker threads (results are independent)");

  // ------------------------------------------------------------------ spectrum
  {
    auto* cmd = app.add_subcommand(
        "spectrum", "Manifold transition frequencies / hyperfine inversion");
    auto wrf1_hz = std::make_shared<double>(0.0);
    auto wrf2_hz = std::make_shared<double>(0.0);
    auto b_mt = std::make_shared<double>(97.159);
    auto gamma_n = std::make_shared<double>(to_hz(sm::gamma_n_c13));
    auto azx_hz = std::make_shared<double>(0.0);
    auto azz_hz = std::make_shared<double>(0.0);
    auto out = std::make_shared<std::string>("spectrum.json");
    auto* o1 = cmd->add_option("--wrf1-hz", *wrf1_hz, "Down-manifold splitting in Hz");
    auto* o2 = cmd->add_option("--wrf2-hz", *wrf2_hz, "Up-manifold splitting in Hz");
    cmd->add_option("--b-mt", *b_mt, "Magnetic field in mT");
    cmd->add_option("--gamma-n-hz-per-t", *gamma_n, "Nuclear gyromagnetic ratio, Hz/T");
    auto* o3 = cmd->add_option("--azx-hz", *azx_hz, "A_zx in Hz (forward mode)");
    auto* o4 = cmd->add_option("--azz-hz", *azz_hz, "A_zz in Hz (forward mode)");
    cmd->add_option("--out", *out, "Output JSON path");
    o1->needs(o2);
    o3->needs(o4);
    cmd->callback([=] {
      json result;
      if (*wrf1_hz > 0.0) {
        const auto hf = sm::hyperfine_from_frequencies(
            from_hz(*wrf1_hz), from_hz(*wrf2_hz), *b_mt * 1e-3, from_hz(*gamma_n));
        result["a_zz_khz"] = to_hz(hf.a_zz) / 1e3;
        result["a_zx_khz"] = to_hz(hf.a_zx) / 1e3;
        std::printf("A_zz = %.4f kHz, A_zx = %.4f kHz\n", to_hz(hf.a_zz) / 1e3,
                    to_hz(hf.a_zx) / 1e3);
      } else if (*azz_hz > 0.0) {
        sm::SpinSystemParams p;
        p.a_zx = from_hz(*azx_hz);
        p.a_zz = from_hz(*azz_hz);
        p.b_z = *b_mt * 1e-3;
        p.gamma_n = from_hz(*gamma_n);
        const auto ms = sm::manifold_spectrum(p);
        result["omega_rf1_khz"] = to_hz(ms.omega_rf1) / 1e3;
        result["omega_rf2_khz"] = to_hz(ms.omega_rf2) / 1e3;
        result["axis_angle_deg"] = ms.axis_angle() * 180.0 / sm::pi;
        std::printf("w_RF1 = %.4f kHz, w_RF2 = %.4f kHz, axis angle = %.3f deg\n",
                    to_hz(ms.omega_rf1) / 1e3, to_hz(ms.omega_rf2) / 1e3,
                    ms.axis_angle() * 180.0 / sm::pi);
      } else {
        throw CLI::ValidationError(
            "spectrum", "provide either --wrf1-hz/--wrf2-hz or --azz-hz/--azx-hz");
      }
      sm::io::write_text(*out, result.dump(2) + "\n");
    });
  }

  // --------------------------------------------------------------------- decay
  {
    auto* cmd = app.add_subcommand("decay", "Closed-form decay and memory estimates");
    cmd->require_subcommand(1);
    auto n = std::make_shared<int>(1);
    auto tau_ms = std::make_shared<double>(271.0);
    auto sigma_hz = std::make_shared<double>(112.5);
    auto tauc_s = std::make_shared<double>(829.0);
    auto t2h_ms = std::make_shared<double>(0.0);
    auto t1e_s = std::make_shared<double>(0.0);

    auto* ex = cmd->add_subcommand("exact", "Exact OU decay exponent gamma(N, tau)");
    ex->add_option("--n", *n, "Pulse count");
    ex->add_option("--tau-ms", *tau_ms, "Pulse separation (2*tau) in ms")->required();
    ex->add_option("--sigma-hz", *sigma_hz, "Noise std dev in Hz");
    ex->add_option("--tauc-s", *tauc_s, "Correlation time in s");
    ex->callback([=] {
      const sm::DecaySpec s{*n, *tau_ms * 1e-3, from_hz(*sigma_hz), *tauc_s};
      std::printf("gamma = %.10g, signal = %.10g\n", sm::decay_rate_exact(s),
                  std::exp(-sm::decay_rate_exact(s)));
    });

    auto* ap = cmd->add_subcommand("approx", "Cubic-law decay exponent");
    ap->add_option("--n", *n, "Pulse count");
    ap->add_option("--tau-ms", *tau_ms, "Pulse separation (2*tau) in ms")->required();
    ap->add_option("--sigma-hz", *sigma_hz, "Noise std dev in Hz");
    ap->add_option("--tauc-s", *tauc_s, "Correlation time in s");
    ap->callback([=] {
      const sm::DecaySpec s{*n, *tau_ms * 1e-3, from_hz(*sigma_hz), *tauc_s};
      std::printf("gamma_approx = %.10g\n", sm::decay_rate_approx(s));
    });

    auto* t2 = cmd->add_subcommand("t2", "Coherence time from gamma = 1");
    t2->add_option("--n", *n, "Pulse count");
    t2->add_option("--t2h-ms", *t2h_ms, "Hahn T2 in ms (uses N^(2/3) scaling)");
    t2->add_option("--sigma-hz", *sigma_hz, "Noise std dev in Hz");
    t2->add_option("--tauc-s", *tauc_s, "Correlation time in s");
    t2->callback([=] {
      const double t =
          (*t2h_ms > 0.0)
              ? sm::t2_for_order(*n, *t2h_ms * 1e-3)
              : sm::t2_from_noise(*n, from_hz(*sigma_hz), *tauc_s);
      std::printf("T2(N=%d) = %.6g s\n", *n, t);
    });

    auto* mem = cmd->add_subcommand("memory", "Memory-time limit for fixed spacing");
    mem->add_option("--tau-ms", *tau_ms, "Pulse separation in ms")->required();
    mem->add_option("--t2h-ms", *t2h_ms, "Hahn T2 in ms");
    mem->add_option("--sigma-hz", *sigma_hz, "Noise std dev in Hz");
    mem->add_option("--tauc-s", *tauc_s, "Correlation time in s");
    mem->add_option("--t1e-s", *t1e_s, "Electron T1 in s (0 = ignore)");
    mem->callback([=] {
      const double t2h = (*t2h_ms > 0.0)
                             ? *t2h_ms * 1e-3
                             : sm::t2_from_noise(1, from_hz(*sigma_hz), *tauc_s);
      std::printf("T2_mem(tau = %g ms) = %.6g s\n", *tau_ms,
                  sm::memory_time(*tau_ms * 1e-3, t2h, *t1e_s));
    });
  }

  // ------------------------------------------------------------------ simulate
  {
    auto* cmd = app.add_subcommand("simulate", "Monte Carlo sequence simulation");
    cmd->require_subcommand(1);

    struct DdOpts {
      int n = 1;
      double tau_lo_ms = 10.0, tau_hi_ms = 600.0;
      int points = 13;
      double rabi_hz = 11.73e3;
      std::string mode = "instant";
      double detuning_hz = 0.0;
      int n_traj = 2000;
      std::uint64_t seed = 0;
      std::string out = "sweep.csv";
      SystemFlags sys;
      NoiseFlags noise;
    };
    auto add_dd = [&](CLI::App* sub, std::shared_ptr<DdOpts> o, bool with_n) {
      if (with_n) sub->add_option("--n", o->n, "Number of pi pulses");
      sub->add_option("--tau-lo-ms", o->tau_lo_ms, "Smallest pulse separation 2*tau, ms");
      sub->add_option("--tau-hi-ms", o->tau_hi_ms, "Largest pulse separation 2*tau, ms");
      sub->add_option("--points", o->points, "Sweep points");
      sub->add_option("--rabi-hz", o->rabi_hz, "RF Rabi frequency in Hz");
      sub->add_option("--mode", o->mode, "Pulse model: instant or finite")
          ->check(CLI::IsMember({"instant", "finite"}));
      sub->add_option("--n-traj", o->n_traj, "Noise trajectories per point");
      sub->add_option("--seed", o->seed, "Master seed")->required();
      sub->add_option("--out", o->out, "Output CSV path");
      o->sys.add(sub);
      o->noise.add(sub);
    };
    auto run_dd = [&, threads_ptr = &threads](DdOpts& o, sm::SequenceKind kind) {
      const auto mode = o.mode == "finite" ? sm::PulseMode::finite
                                           : sm::PulseMode::instantaneous;
      const bool ramsey = kind == sm::SequenceKind::ramsey;
      const sm::SpinSystemParams sys = o.sys.params();
      const sm::ManifoldSpectrum ms = sm::manifold_spectrum(sys);
      const auto taus = linspace(o.tau_lo_ms * 1e-3, o.tau_hi_ms * 1e-3, o.points);
      std::vector<sm::PulseSequence> seqs;
      for (double tt : taus) {
        sm::SequenceRequest r;
        r.kind = kind;
        r.n = o.n;
        // DD builders take the free-evolution segment tau = tau_tilde / 2;
        // for Ramsey the sweep variable is the free time itself.
        r.tau = ramsey ? tt : 0.5 * tt;
        r.rabi = from_hz(o.rabi_hz);
        r.mode = mode;
        r.static_detuning = from_hz(o.detuning_hz);
        seqs.push_back(sm::build_sequence(r, ms));
      }
      const auto res =
          sm::simulate_sweep(taus, seqs, sys, o.noise.channels(), o.n_traj, o.seed,
                             *threads_ptr);
      sm::io::write_sweep_csv(o.out, ramsey ? "free_time_s" : "tau_tilde_s", res.sweep,
                              res.mean, res.stderr_);
      json echo = {{"command", "simulate"},
                   {"seed", o.seed},
                   {"n_traj", o.n_traj},
                   {"n", o.n},
                   {"rabi_hz", o.rabi_hz},
                   {"mode", o.mode},
                   {"system", o.sys.echo()},
                   {"noise", o.noise.echo()}};
      sm::io::write_sidecar(o.out, echo);
      std::printf("wrote %s (%d points, %d trajectories)\n", o.out.c_str(), o.points,
                  o.n_traj);
    };

    {
      auto o = std::make_shared<DdOpts>();
      auto* sub = cmd->add_subcommand("hahn", "Hahn echo pulse-separation sweep");
      add_dd(sub, o, false);
      sub->callback([=, &run_dd] {
        o->n = 1;
        run_dd(*o, sm::SequenceKind::cpmg);
      });
    }
    {
      auto o = std::make_shared<DdOpts>();
      auto* sub = cmd->add_subcommand("cpmg", "CPMG pulse-separation sweep");
      add_dd(sub, o, true);
      sub->callback([=, &run_dd] { run_dd(*o, sm::SequenceKind::cpmg); });
    }
    {
      auto o = std::make_shared<DdOpts>();
      o->n = 8;
      auto* sub = cmd->add_subcommand("xy8", "XY8 pulse-separation sweep");
      add_dd(sub, o, true);
      sub->callback([=, &run_dd] { run_dd(*o, sm::SequenceKind::xy8); });
    }
    {
      auto o = std::make_shared<DdOpts>();
      auto* sub = cmd->add_subcommand("ramsey", "Ramsey free-induction sweep");
      add_dd(sub, o, false);
      sub->add_option("--detuning-hz", o->detuning_hz, "Deliberate detuning in Hz");
      sub->callback([=, &run_dd] { run_dd(*o, sm::SequenceKind::ramsey); });
    }
    {
      auto o = std::make_shared<DdOpts>();
      auto* sub = cmd->add_subcommand("rabi", "Driven Rabi oscillation");
      sub->add_option("--t-hi-us", o->tau_hi_ms, "Longest drive time in us");
      sub->add_option("--points", o->points, "Sweep points");
      sub->add_option("--rabi-hz", o->rabi_hz, "RF Rabi frequency in Hz");
      sub->add_option("--n-traj", o->n_traj, "Noise trajectories per point");
      sub->add_option("--seed", o->seed, "Master seed")->required();
      sub->add_option("--out", o->out, "Output CSV path");
      o->sys.add(sub);
      o->noise.add(sub);
      sub->callback([=, threads_ptr = &threads] {
        const sm::SpinSystemParams sys = o->sys.params();
        const sm::ManifoldSpectrum ms = sm::manifold_spectrum(sys);
        const auto ts = linspace(0.0, o->tau_hi_ms * 1e-6, o->points);
        std::vector<sm::PulseSequence> seqs;
        for (double t : ts) {
          sm::SequenceRequest r;
          r.kind = sm::SequenceKind::rabi;
          r.drive_time = t;
          r.rabi = from_hz(o->rabi_hz);
          seqs.push_back(sm::build_sequence(r, ms));
        }
        const auto res = sm::simulate_sweep(ts, seqs, sys, o->noise.channels(),
                                            o->n_traj, o->seed, *threads_ptr);
        sm::io::write_sweep_csv(o->out, "drive_time_s", res.sweep, res.mean,
                                res.stderr_);
        sm::io::write_sidecar(o->out, json{{"command", "simulate rabi"},
                                           {"seed", o->seed},
                                           {"n_traj", o->n_traj},
                                           {"rabi_hz", o->rabi_hz},
                                           {"system", o->sys.echo()},
                                           {"noise", o->noise.echo()}});
        std::printf("wrote %s\n", o->out.c_str());
      });
    }
    {
      struct PumpOpts {
        int n_reps = 50;
        double t_pi_us = 1.4;
        std::string target = "v2";
        double sigma_delta_e_hz = 146e3;
        int n_traj = 1000;
        std::uint64_t seed = 0;
        std::string out = "spin_pump.csv";
        SystemFlags sys;
      };
      auto o = std::make_shared<PumpOpts>();
      auto* sub = cmd->add_subcommand("spin-pump",
                                      "Nuclear polarization vs pump repetitions");
      sub->add_option("--n-reps", o->n_reps, "Pump repetitions");
      sub->add_option("--t-pi-us", o->t_pi_us, "MW pi duration in us");
      sub->add_option("--target", o->target, "Target eigenstate: v1 or v2")
          ->check(CLI::IsMember({"v1", "v2"}));
      sub->add_option("--sigma-delta-e-hz", o->sigma_delta_e_hz,
                      "Electron dephasing std dev in Hz");
      sub->add_option("--n-traj", o->n_traj, "Noise trajectories");
      sub->add_option("--seed", o->seed, "Master seed")->required();
      sub->add_option("--out", o->out, "Output CSV path");
      o->sys.add(sub);
      sub->callback([=, threads_ptr = &threads] {
        const sm::SpinSystemParams sys = o->sys.params();
        const auto res = sm::simulate_spin_pumping(
            o->n_reps, sys, o->t_pi_us * 1e-6,
            o->target == "v2" ? sm::PumpTarget::v2 : sm::PumpTarget::v1,
            sm::OUParams{from_hz(o->sigma_delta_e_hz), 1.0}, o->n_traj, o->seed,
            *threads_ptr);
        std::vector<double> reps(res.repetition.begin(), res.repetition.end());
        sm::io::write_sweep_csv(o->out, "repetition", reps, res.mean, res.stderr_);
        sm::io::write_sidecar(o->out, json{{"command", "simulate spin-pump"},
                                           {"seed", o->seed},
                                           {"n_traj", o->n_traj},
                                           {"t_pi_us", o->t_pi_us},
                                           {"target", o->target},
                                           {"sigma_delta_e_hz", o->sigma_delta_e_hz},
                                           {"system", o->sys.echo()}});
        std::printf("wrote %s; final polarization %.4f\n", o->out.c_str(),
                    res.mean.back());
      });
    }
    {
      struct OdmrOpts {
        std::string manifold = "down";
        std::string direction = "descending";
        double center_hz = 0.0;
        double span_hz = 4.8e6;
        int points = 121;
        int n_avg = 200;
        double p_up = 0.5;
        double mw_rabi_hz = 349e3;
        double sigma_delta_e_hz = 146e3;
        std::uint64_t seed = 0;
        std::string out = "odmr.csv";
        SystemFlags sys;
      };
      auto o = std::make_shared<OdmrOpts>();
      auto* sub = cmd->add_subcommand("odmr", "Pulsed ODMR spectrum");
      sub->add_option("--manifold", o->manifold, "Reset target: up or down")
          ->check(CLI::IsMember({"up", "down"}));
      sub->add_option("--direction", o->direction, "Sweep direction")
          ->check(CLI::IsMember({"ascending", "descending"}));
      sub->add_option("--center-hz", o->center_hz,
                      "Sweep center in Hz (default: bare electron resonance)");
      sub->add_option("--span-hz", o->span_hz, "Sweep span in Hz");
      sub->add_option("--points", o->points, "Sweep points");
      sub->add_option("--n-avg", o->n_avg, "Averaging passes");
      sub->add_option("--p-up", o->p_up, "Initial up-nucleus population");
      sub->add_option("--mw-rabi-hz", o->mw_rabi_hz, "MW Rabi frequency in Hz");
      sub->add_option("--sigma-delta-e-hz", o->sigma_delta_e_hz,
                      "Electron dephasing std dev in Hz");
      sub->add_option("--seed", o->seed, "Master seed")->required();
      sub->add_option("--out", o->out, "Output CSV path");
      o->sys.add(sub);
      sub->callback([=, threads_ptr = &threads] {
        sm::OdmrRunParams prm;
        prm.sys = o->sys.params();
        prm.gamma_e_eff = prm.sys.gamma_e_eff;
        prm.manifold =
            o->manifold == "up" ? sm::ElectronState::up : sm::ElectronState::down;
        prm.p_up_init = o->p_up;
        prm.mw_rabi = from_hz(o->mw_rabi_hz);
        prm.t_pi = sm::pi / prm.mw_rabi;
        prm.delta_e = {from_hz(o->sigma_delta_e_hz), 1.0};
        prm.n_avg = o->n_avg;
        prm.seed = o->seed;
        prm.threads = *threads_ptr;
        const double center =
            o->center_hz > 0.0 ? o->center_hz : to_hz(prm.gamma_e_eff * prm.sys.b_z);
        auto freqs = linspace(center - 0.5 * o->span_hz, center + 0.5 * o->span_hz,
                              o->points);
        if (o->direction == "descending") std::reverse(freqs.begin(), freqs.end());
        const auto res = sm::simulate_odmr(freqs, prm);
        sm::io::write_columns_csv(
            o->out, {"frequency_hz", "signal", "stderr", "nuclear_up_population"},
            {&res.freq_hz, &res.signal, &res.signal_stderr, &res.nuclear_up_pop});
        sm::io::write_sidecar(o->out, json{{"command", "simulate odmr"},
                                           {"seed", o->seed},
                                           {"manifold", o->manifold},
                                           {"direction", o->direction},
                                           {"center_hz", center},
                                           {"span_hz", o->span_hz},
                                           {"points", o->points},
                                           {"n_avg", o->n_avg},
                                           {"p_up", o->p_up},
                                           {"mw_rabi_hz", o->mw_rabi_hz},
                                           {"sigma_delta_e_hz", o->sigma_delta_e_hz},
                                           {"system", o->sys.echo()}});
        std::printf("wrote %s\n", o->out.c_str());
      });
    }
  }

  // ------------------------------------------------------------------ fit-odmr
  {
    struct FitOdmrOpts {
      std::vector<std::string> spectra;  // manifold:path
      double wrf1_hz = 2489.73e3;
      double wrf2_hz = 493.62e3;
      double mw_rabi_hz = 349e3;
      double sigma_delta_e_hz = 146e3;
      int quad_nodes = 20;
      int population = 28;
      int generations = 90;
      std::uint64_t seed = 0;
      std::string out = "odmr_fit.json";
    };
    auto o = std::make_shared<FitOdmrOpts>();
    auto* cmd = app.add_subcommand("fit-odmr",
                                   "Global ODMR fit (differential evolution + "
                                   "product-constrained refinement)");
    cmd->add_option("--spectrum", o->spectra,
                    "Spectrum as manifold:path.csv (columns frequency_hz,signal); "
                    "repeat up to 4 times")
        ->required()
        ->expected(-1);
    cmd->add_option("--wrf1-hz", o->wrf1_hz, "Measured down-manifold splitting, Hz");
    cmd->add_option("--wrf2-hz", o->wrf2_hz, "Measured up-manifold splitting, Hz");
    cmd->add_option("--mw-rabi-hz", o->mw_rabi_hz, "MW Rabi frequency, Hz");
    cmd->add_option("--sigma-delta-e-hz", o->sigma_delta_e_hz,
                    "Electron dephasing std dev, Hz");
    cmd->add_option("--quad-nodes", o->quad_nodes,
                    "Quadrature order of the model's detuning average");
    cmd->add_option("--population", o->population, "DE population size");
    cmd->add_option("--generations", o->generations, "DE generations");
    cmd->add_option("--seed", o->seed, "Master seed")->required();
    cmd->add_option("--out", o->out, "Output JSON path");
    cmd->callback([=, threads_ptr = &threads] {
      std::vector<sm::OdmrSpectrumData> data;
      for (const auto& s : o->spectra) {
        const auto colon = s.find(':');
        if (colon == std::string::npos)
          throw CLI::ValidationError("fit-odmr", "--spectrum expects manifold:path");
        const std::string manifold = s.substr(0, colon);
        const std::string path = s.substr(colon + 1);
        const auto cols = sm::io::read_csv_columns(path, 2);
        sm::OdmrSpectrumData d;
        d.manifold =
            manifold == "up" ? sm::ElectronState::up : sm::ElectronState::down;
        d.freq_hz = cols[0];
        d.signal = cols[1];
        data.push_back(std::move(d));
      }
      sm::OdmrFixedInputs fixed;
      fixed.omega_rf1 = from_hz(o->wrf1_hz);
      fixed.omega_rf2 = from_hz(o->wrf2_hz);
      fixed.mw_rabi = from_hz(o->mw_rabi_hz);
      fixed.t_pi = sm::pi / fixed.mw_rabi;
      fixed.sigma_delta_e = from_hz(o->sigma_delta_e_hz);
      sm::OdmrFitSettings settings;
      settings.de.population = o->population;
      settings.de.generations = o->generations;
      settings.de.seed = o->seed;
      settings.quadrature_nodes = o->quad_nodes;
      settings.threads = *threads_ptr;
      const auto fit = sm::fit_odmr(data, fixed, settings);
      json out;
      out["gamma_e_eff_shared_ghz_per_t"] = to_hz(fit.gamma_e_eff_shared) / 1e9;
      out["a_zz_mean_khz"] = to_hz(fit.a_zz_mean) / 1e3;
      out["a_zx_mean_khz"] = to_hz(fit.a_zx_mean) / 1e3;
      out["evaluations"] = fit.evaluations;
      out["r2_warning"] = fit.r2_warning;
      for (std::size_t i = 0; i < fit.spectra.size(); ++i) {
        const auto& f = fit.spectra[i];
        out["spectra"][i] = {{"b_mt", f.b * 1e3},
                             {"b_stderr_mt", f.b_stderr * 1e3},
                             {"p_up", f.p_up},
                             {"p_up_stderr", f.p_stderr},
                             {"gamma_e_eff_ghz_per_t", to_hz(f.gamma_e_eff) / 1e9},
                             {"r_squared", f.r2}};
      }
      sm::io::write_text(o->out, out.dump(2) + "\n");
      std::printf("fit-odmr: A_zz = %.2f kHz, A_zx = %.2f kHz, R2 =",
                  to_hz(fit.a_zz_mean) / 1e3, to_hz(fit.a_zx_mean) / 1e3);
      for (const auto& f : fit.spectra) std::printf(" %.4f", f.r2);
      std::printf("%s\n", fit.r2_warning ? " (warning: low R2)" : "");
      if (fit.r2_warning) throw FitFailure("ODMR fit below R2 threshold");
    });
  }

  // ----------------------------------------------------------------- fit-tau-c
  {
    struct TauCOpts {
      std::vector<std::string> inputs;  // n:path
      double sigma_hz = 112.5;
      double guess_s = 100.0;
      std::string out = "tau_c.json";
    };
    auto o = std::make_shared<TauCOpts>();
    auto* cmd =
        app.add_subcommand("fit-tau-c", "Correlation time from DD decay curves");
    cmd->add_option("--input", o->inputs,
                    "Dataset as n:path.csv (columns tau_tilde_s,signal); repeatable")
        ->required()
        ->expected(-1);
    cmd->add_option("--sigma-hz", o->sigma_hz, "Detuning noise std dev, Hz");
    cmd->add_option("--guess-s", o->guess_s, "Initial correlation time guess, s");
    cmd->add_option("--out", o->out, "Output JSON path");
    cmd->callback([=] {
      std::vector<sm::CpmgDataset> sets;
      for (const auto& s : o->inputs) {
        const auto colon = s.find(':');
        if (colon == std::string::npos)
          throw CLI::ValidationError("fit-tau-c", "--input expects n:path");
        sm::CpmgDataset d;
        d.n = std::stoi(s.substr(0, colon));
        const auto cols = sm::io::read_csv_columns(s.substr(colon + 1), 2);
        d.tau_tilde = cols[0];
        d.signal = cols[1];
        sets.push_back(std::move(d));
      }
      sm::TauCEstimate est;
      try {
        est = sm::fit_correlation_time(sets, from_hz(o->sigma_hz), o->guess_s);
      } catch (const std::runtime_error& e) {
        throw FitFailure(e.what());
      }
      json out = {{"tau_c_s", est.tau_c},
                  {"stderr_s", est.stderr_},
                  {"ci95_low_s", est.ci95_low},
                  {"ci95_high_s", est.ci95_high},
                  {"rss", est.rss}};
      sm::io::write_text(o->out, out.dump(2) + "\n");
      std::printf("tau_c = %.1f s (95%% CI [%.1f, %.1f])\n", est.tau_c, est.ci95_low,
                  est.ci95_high);
    });
  }

  // -------------------------------------------------------------- fidelity-map
  {
    struct MapOpts {
      std::string kind = "pi";
      double rabi_hz = 11.73e3;
      double spacing_ms = 10.0;
      double sigma_delta_hz = 112.5;
      double sigma_eps = 0.005;
      double max_sigma = 4.0;
      int grid = 41;
      std::string out = "fidelity_map.csv";
    };
    auto o = std::make_shared<MapOpts>();
    auto* cmd = app.add_subcommand("fidelity-map",
                                   "Pulse/sequence fidelity vs frozen errors");
    cmd->add_option("--kind", o->kind, "pi2, pi, cpmg8 or xy8")
        ->check(CLI::IsMember({"pi2", "pi", "cpmg8", "xy8"}));
    cmd->add_option("--rabi-hz", o->rabi_hz, "RF Rabi frequency, Hz");
    cmd->add_option("--spacing-ms", o->spacing_ms, "Pi-pulse center spacing, ms");
    cmd->add_option("--sigma-delta-hz", o->sigma_delta_hz, "Detuning sigma, Hz");
    cmd->add_option("--sigma-eps", o->sigma_eps, "Amplitude sigma");
    cmd->add_option("--max-sigma", o->max_sigma, "Grid half-range in sigmas");
    cmd->add_option("--grid", o->grid, "Grid points per axis");
    cmd->add_option("--out", o->out, "Output CSV path");
    cmd->callback([=, threads_ptr = &threads] {
      sm::FidelitySequence kind = sm::FidelitySequence::pi;
      if (o->kind == "pi2") kind = sm::FidelitySequence::pi_half;
      if (o->kind == "cpmg8") kind = sm::FidelitySequence::cpmg8;
      if (o->kind == "xy8") kind = sm::FidelitySequence::xy8;
      const auto deltas =
          linspace(-o->max_sigma * from_hz(o->sigma_delta_hz),
                   o->max_sigma * from_hz(o->sigma_delta_hz), o->grid);
      const auto epss =
          linspace(-o->max_sigma * o->sigma_eps, o->max_sigma * o->sigma_eps, o->grid);
      const auto map = sm::fidelity_map(kind, deltas, epss, from_hz(o->rabi_hz),
                                        o->spacing_ms * 1e-3, *threads_ptr);
      sm::io::write_matrix_csv(o->out, "delta_rad_s\\eps", map.delta, map.eps, map.f);
      std::printf("wrote %s\n", o->out.c_str());
    });
  }

  // ---------------------------------------------------------------- duty-cycle
  {
    struct DutyOpts {
      std::string kind = "cpmg";
      int n = 1;
      double tau_ms = 24.0;
      double rabi_hz = 11.765e3;  // 42.5 us pi pulse
    };
    auto o = std::make_shared<DutyOpts>();
    auto* cmd = app.add_subcommand("duty-cycle", "RF-on fraction of a sequence");
    cmd->add_option("--kind", o->kind, "cpmg, xy8, hahn or ramsey")
        ->check(CLI::IsMember({"cpmg", "xy8", "hahn", "ramsey"}));
    cmd->add_option("--n", o->n, "Pulse count");
    cmd->add_option("--tau-ms", o->tau_ms, "Pulse separation 2*tau, ms");
    cmd->add_option("--rabi-hz", o->rabi_hz, "RF Rabi frequency, Hz");
    cmd->callback([=] {
      sm::SequenceRequest r;
      r.kind = o->kind == "xy8"     ? sm::SequenceKind::xy8
               : o->kind == "hahn"  ? sm::SequenceKind::hahn
               : o->kind == "ramsey" ? sm::SequenceKind::ramsey
                                     : sm::SequenceKind::cpmg;
      r.n = o->n;
      r.tau = (r.kind == sm::SequenceKind::ramsey ? 1.0 : 0.5) * o->tau_ms * 1e-3;
      r.rabi = from_hz(o->rabi_hz);
      r.mode = sm::PulseMode::finite;
      const auto seq = sm::build_sequence(r, sm::manifold_spectrum({}));
      std::printf("duty cycle = %.6f %% (RF on %.4g s of %.4g s)\n",
                  100.0 * sm::duty_cycle(seq), seq.rf_on_time(), seq.total_duration());
    });
  }

  // ------------------------------------------------------------ optimize-pulse
  {
    struct OptOpts {
      double duration_ns = 2950.0;
      int super_iterations = 16;
      int evals = 1500;
      int pool = 1;
      int eval_pool = 1;
      double clamp_hz = 2.0e6;
      std::string noise_channel = "amplitude";
      double noise_sigma = 0.0;
      std::uint64_t seed = 0;
      std::string out_prefix = "pulse";
      std::string warm_start;
      SystemFlags sys;
    };
    auto o = std::make_shared<OptOpts>();
    auto* cmd = app.add_subcommand(
        "optimize-pulse", "dCRAB shaped-pulse optimization of nuclear polarization");
    cmd->add_option("--duration-ns", o->duration_ns, "Pulse duration in ns");
    cmd->add_option("--super-iterations", o->super_iterations, "Super-iterations");
    cmd->add_option("--evals", o->evals, "Function evaluations per super-iteration");
    cmd->add_option("--pool", o->pool, "Optimization noise pool size");
    cmd->add_option("--eval-pool", o->eval_pool, "Evaluation noise pool size");
    cmd->add_option("--clamp-hz", o->clamp_hz, "Peak Rabi clamp in Hz");
    cmd->add_option("--noise-channel", o->noise_channel,
                    "Quasi-static noise channel: amplitude or detuning")
        ->check(CLI::IsMember({"amplitude", "detuning"}));
    cmd->add_option("--noise-sigma", o->noise_sigma,
                    "Noise std dev (relative for amplitude, Hz for detuning; 0 = "
                    "noiseless)");
    cmd->add_option("--seed", o->seed, "Master seed")->required();
    cmd->add_option("--out", o->out_prefix, "Output path prefix");
    cmd->add_option("--warm-start", o->warm_start,
                    "JSON pulse file to refine instead of starting fresh")
        ->check(CLI::ExistingFile);
    o->sys.add(cmd);
    cmd->callback([=, threads_ptr = &threads] {
      const sm::SpinSystemParams sys = o->sys.params();
      sm::DcrabSettings st;
      st.super_iterations = o->super_iterations;
      st.evals_per_super_iteration = o->evals;
      st.optimization_pool = o->pool;
      st.evaluation_pool = o->eval_pool;
      st.clamp = from_hz(o->clamp_hz);
      st.noise_channel = o->noise_channel == "detuning"
                             ? sm::PulseNoiseChannel::detuning
                             : sm::PulseNoiseChannel::amplitude;
      st.seed = o->seed;
      st.threads = *threads_ptr;
      const double sigma = o->noise_channel == "detuning" ? from_hz(o->noise_sigma)
                                                          : o->noise_sigma;
      const sm::OUParams noise{sigma, 1.0};

      std::optional<sm::PulseShape> warm;
      if (!o->warm_start.empty()) {
        std::ifstream in(o->warm_start);
        json j;
        in >> j;
        sm::PulseShape p;
        p.duration = j.at("duration_s").get<double>();
        p.rise_time = j.at("rise_time_s").get<double>();
        p.clamp = j.at("clamp_rad_s").get<double>();
        p.amp_offset = j.at("amp_offset_rad_s").get<double>();
        p.phase_offset = j.at("phase_offset_rad").get<double>();
        for (const auto& h : j.at("amp"))
          p.amp.push_back({h.at("freq_hz").get<double>(), h.at("a").get<double>(),
                           h.at("b").get<double>()});
        for (const auto& h : j.at("phase"))
          p.phase.push_back({h.at("freq_hz").get<double>(), h.at("a").get<double>(),
                             h.at("b").get<double>()});
        warm = p;
      }
      const auto res = sm::dcrab_optimize(sys, o->duration_ns * 1e-9, st, noise,
                                          warm ? &*warm : nullptr);

      // Sampled waveform (1 ns grid), raw coefficients and FoM history.
      const std::string wave_path = o->out_prefix + "_waveform.csv";
      {
        const int n = static_cast<int>(std::llround(o->duration_ns)) + 1;
        std::vector<double> t_ns(static_cast<std::size_t>(n)),
            rabi_hz(static_cast<std::size_t>(n)), phase(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
          const double t = i * 1e-9;
          t_ns[static_cast<std::size_t>(i)] = static_cast<double>(i);
          rabi_hz[static_cast<std::size_t>(i)] = to_hz(res.pulse.rabi_at(t));
          phase[static_cast<std::size_t>(i)] = res.pulse.phase_at(t);
        }
        sm::io::write_columns_csv(wave_path, {"t_ns", "rabi_hz", "phase_rad"},
                                  {&t_ns, &rabi_hz, &phase});
      }
      {
        std::vector<double> si, ev, fom;
        for (const auto& h : res.history) {
          si.push_back(h.super_iteration);
          ev.push_back(static_cast<double>(h.evaluation));
          fom.push_back(h.value);
        }
        sm::io::write_columns_csv(o->out_prefix + "_fom_history.csv",
                                  {"super_iteration", "evaluation", "fom"},
                                  {&si, &ev, &fom});
      }
      {
        json j;
        j["duration_s"] = res.pulse.duration;
        j["rise_time_s"] = res.pulse.rise_time;
        j["clamp_rad_s"] = res.pulse.clamp;
        j["amp_offset_rad_s"] = res.pulse.amp_offset;
        j["phase_offset_rad"] = res.pulse.phase_offset;
        for (const auto& h : res.pulse.amp)
          j["amp"].push_back({{"freq_hz", h.freq}, {"a", h.a}, {"b", h.b}});
        j["phase"] = json::array();
        for (const auto& h : res.pulse.phase)
          j["phase"].push_back({{"freq_hz", h.freq}, {"a", h.a}, {"b", h.b}});
        j["fom_optimization_pool"] = res.fom_optimization_pool;
        j["fom_evaluation_pool"] = res.fom_evaluation_pool;
        sm::io::write_text(o->out_prefix + "_pulse.json", j.dump(2) + "\n");
      }
      sm::io::write_sidecar(wave_path, json{{"command", "optimize-pulse"},
                                            {"seed", o->seed},
                                            {"duration_ns", o->duration_ns},
                                            {"super_iterations", o->super_iterations},
                                            {"evals", o->evals},
                                            {"pool", o->pool},
                                            {"eval_pool", o->eval_pool},
                                            {"clamp_hz", o->clamp_hz},
                                            {"noise_channel", o->noise_channel},
                                            {"noise_sigma", o->noise_sigma},
                                            {"system", o->sys.echo()}});
      std::printf("optimize-pulse: FoM %.3e (optimization pool), %.3e (evaluation pool)\n",
                  res.fom_optimization_pool, res.fom_evaluation_pool);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_app(argc, argv);
  } catch (const FitFailure& e) {
    std::fprintf(stderr, "fit failure: %s\n", e.what());
    return 3;
  } catch (const CLI::Error&) {
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
