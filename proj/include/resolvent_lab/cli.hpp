#pragma once

// Run orchestration behind the command-line tool: one task per config,
// artifacts under outdir/{manifest.json, data/, reports/}.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "resolvent_lab/config.hpp"
#include "resolvent_lab/io.hpp"
#include "resolvent_lab/level_curves.hpp"
#include "resolvent_lab/process.hpp"
#include "resolvent_lab/resolvent_grid.hpp"
#include "resolvent_lab/resolvent_mc.hpp"
#include "resolvent_lab/verify.hpp"

namespace resolvent_lab {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr int kExitPass = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitFailedBound = 2;

/// Values given on the command line win over the file.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> outdir;
  std::vector<std::string> sets;
};

inline const std::vector<std::string>& all_checks() {
  static const std::vector<std::string> names{
      "theorem",        "low_energy",     "fw_low_energy", "drift_full",
      "drift_skeleton", "skeleton_tail",  "homogenization", "horseshoe"};
  return names;
}

struct VerifySpec {
  std::vector<std::string> checks;
  std::vector<double> lambdas;
  long paths = 2000;
  double ceiling = 1.5;
  double drift_ceiling = 2.0;
  double L = 2.0;
  double fw_L = 0.0;  // 0 means l + 1
  long tail_samples = 20000;
  double tail_ref_lambda = 0.125;
  double tail_ref_rho = 6.0;
};

/// Fully validated run configuration.
struct RunConfig {
  std::string task;
  std::uint64_t seed = 1;
  int workers = 0;
  std::string outdir = "out";
  ModelParams model{0.25, Potential::zero()};
  Json echo;
  SourcedJson source;
};

namespace detail {

/// The task's section, or an empty one so every key takes its default.
inline ConfigNode section(const SourcedJson& src, const ConfigNode& root, const std::string& key) {
  static const Json empty = Json::object();
  return root.has(key) ? root.object(key) : ConfigNode(src, empty, key);
}

inline VerifySpec read_verify(const ConfigNode& n, bool sweep) {
  n.allow_only({"checks", "lambdas", "paths", "ceiling", "drift_ceiling", "L", "fw_L",
                "tail_samples", "tail_ref_lambda", "tail_ref_rho"});
  VerifySpec v;
  v.checks = n.strings("checks", all_checks());
  for (const auto& c : v.checks) {
    if (std::find(all_checks().begin(), all_checks().end(), c) == all_checks().end()) {
      n.fail(n.child("checks"), "unknown check '" + c + "'");
    }
  }
  if (sweep && !n.has("lambdas")) {
    n.fail(n.child("lambdas"), "sweep needs a lambda list");
  }
  v.lambdas = n.numbers("lambdas", {0.5, 0.25, 0.125, 0.0625});
  if (v.lambdas.empty()) {
    n.fail(n.child("lambdas"), "lambda list is empty");
  }
  for (double l : v.lambdas) {
    if (!(l > 0.0 && l < 1.0)) {
      n.fail(n.child("lambdas"), "every lambda must lie in (0, 1)");
    }
  }
  v.paths = n.integer("paths", v.paths);
  v.ceiling = n.number("ceiling", v.ceiling);
  v.drift_ceiling = n.number("drift_ceiling", v.drift_ceiling);
  v.L = n.number("L", v.L);
  v.fw_L = n.number("fw_L", v.fw_L);
  v.tail_samples = n.integer("tail_samples", v.tail_samples);
  v.tail_ref_lambda = n.number("tail_ref_lambda", v.tail_ref_lambda);
  v.tail_ref_rho = n.number("tail_ref_rho", v.tail_ref_rho);
  if (v.paths < 2) {
    n.fail(n.child("paths"), "need at least 2 paths");
  }
  if (v.tail_samples < 1) {
    n.fail(n.child("tail_samples"), "need at least 1 sample");
  }
  if (!(v.ceiling >= 1.0) || !(v.drift_ceiling >= 1.0)) {
    n.fail(n.child("ceiling"), "growth ceilings must be >= 1");
  }
  if (!(v.tail_ref_lambda > 0.0 && v.tail_ref_lambda < 1.0) || !(v.tail_ref_rho > 0.0)) {
    n.fail(n.child("tail_ref_lambda"), "reference probe needs lambda in (0,1) and rho > 0");
  }
  return v;
}

}  // namespace detail

inline const std::set<std::string>& top_level_keys() {
  static const std::set<std::string> keys{"task",     "seed",  "workers", "outdir", "model",
                                          "simulate", "estimate", "solve", "verify", "sweep"};
  return keys;
}

/// Parse and validate everything that does not depend on the task body.
inline RunConfig load_run_config(SourcedJson src, const RunOverrides& ov) {
  for (const auto& s : ov.sets) {
    apply_override(src, s);
  }
  RunConfig cfg;
  const ConfigNode root(src, src.doc, "");
  root.allow_only(top_level_keys());
  cfg.task = root.choice("task", {"simulate", "estimate", "solve", "verify", "sweep"}, "verify");
  cfg.seed = ov.seed ? *ov.seed : root.unsigned_integer("seed", cfg.seed);
  long workers = root.integer("workers", 0);
  if (ov.workers) {
    workers = *ov.workers;
  }
  if (workers < 0) {
    root.fail("workers", "workers must be >= 0 (0 means automatic)");
  }
  cfg.workers = static_cast<int>(workers);
  cfg.outdir = ov.outdir ? *ov.outdir : root.text("outdir", cfg.outdir);

  double lambda = 0.25;
  Potential pot = Potential::zero();
  if (root.has("model")) {
    const ConfigNode m = root.object("model");
    m.allow_only({"lambda", "potential"});
    lambda = m.number("lambda", lambda);
    if (!(lambda > 0.0 && lambda < 1.0)) {
      m.fail(m.child("lambda"), "lambda must lie in (0, 1)");
    }
    if (m.has("potential")) {
      pot = read_potential(m.object("potential"));
    }
  }
  cfg.model = ModelParams(lambda, pot);
  for (const char* t : {"simulate", "estimate", "solve", "verify", "sweep"}) {
    if (root.has(t) && cfg.task != t) {
      root.fail(t, std::string("section '") + t + "' does not belong to task '" + cfg.task + "'");
    }
  }
  cfg.echo = src.doc;
  cfg.echo["seed"] = cfg.seed;
  cfg.echo["workers"] = cfg.workers;
  cfg.echo["outdir"] = cfg.outdir;
  cfg.source = std::move(src);
  return cfg;
}

/// Runs one configured task and writes its artifacts.
class Runner {
 public:
  explicit Runner(RunConfig cfg, std::ostream& log = std::cerr)
      : cfg_(std::move(cfg)), log_(log), root_(cfg_.source, cfg_.source.doc, "") {}

  int run() {
    // validate the task body before touching the filesystem
    std::function<int()> task;
    if (cfg_.task == "simulate") {
      task = prepare_simulate();
    } else if (cfg_.task == "estimate") {
      task = prepare_estimate();
    } else if (cfg_.task == "solve") {
      task = prepare_solve();
    } else {
      task = prepare_verify(cfg_.task == "sweep");
    }
    namespace fs = std::filesystem;
    out_ = cfg_.outdir;
    fs::create_directories(out_ / "data");
    fs::create_directories(out_ / "reports");
    write_manifest();
    return task();
  }

 private:
  // -------------------------------------------------------------------------
  std::function<int()> prepare_simulate() {
    const ConfigNode n = detail::section(cfg_.source, root_, "simulate");
    n.allow_only({"process", "x", "p", "rho", "branch", "horizon", "max_step", "energy_tol",
                  "event_cap"});
    const std::string process = n.choice("process", {"full", "momentum", "fw"}, "full");
    const double horizon = n.number("horizon", 10.0);
    if (!(horizon >= 0.0)) {
      n.fail(n.child("horizon"), "horizon must be nonnegative");
    }
    SimConfig sim;
    sim.max_step = n.number("max_step", sim.max_step);
    sim.energy_tol = n.number("energy_tol", sim.energy_tol);
    sim.event_cap = n.integer("event_cap", sim.event_cap);
    try {
      sim.validate();
    } catch (const std::invalid_argument& e) {
      n.fail(n.path(), e.what());
    }
    const PhaseState s0(n.number("x", 0.0), n.number("p", 2.0));
    CurveState g0{n.number("rho", 0.0), static_cast<int>(n.integer("branch", 1))};
    if (process == "fw") {
      if (g0.eps != 1 && g0.eps != -1) {
        n.fail(n.child("branch"), "branch must be +1 or -1");
      }
      if (!(g0.rho * g0.rho > 2.0 * cfg_.model.l)) {
        n.fail(n.child("rho"), "FW start needs rho > sqrt(2 l) = " +
                                   format_double(std::sqrt(2.0 * cfg_.model.l)));
      }
    }
    return [=, this] {
      RandomStream rng(cfg_.seed, 0);
      const Potential& v = cfg_.model.potential;
      CsvWriter csv(out_ / "data" / "trajectory.csv", {"time", "kind", "x", "p", "H"});
      bool truncated = false;
      if (process == "fw") {
        const FwTrajectory t = simulate_fw(g0, horizon, cfg_.model, rng, sim.event_cap);
        // orbit labels are written at the potential minimum, where p = eps rho
        const double x = v.argmin();
        auto label = [&](const FwEvent& e, std::size_t k) {
          return std::string(k == 0 ? "boundary_sample" : e.exited ? "exit" : "collision");
        };
        for (std::size_t k = 0; k < t.events.size(); ++k) {
          const FwEvent& e = t.events[k];
          csv.row({e.time, label(e, k), x, e.state.eps * e.state.rho,
                   0.5 * e.state.rho * e.state.rho + v.inf()});
        }
        if (!t.exited && !t.truncated) {
          const CurveState& g = t.events.back().state;
          csv.row({horizon, std::string("boundary_sample"), x, g.eps * g.rho,
                   0.5 * g.rho * g.rho + v.inf()});
        }
        truncated = t.truncated;
      } else {
        const Trajectory t = process == "full"
                                 ? simulate_full(s0, horizon, cfg_.model, sim, rng)
                                 : simulate_momentum_only(s0.p, horizon, cfg_.model.lambda, rng,
                                                          sim.event_cap);
        const Potential flat = Potential::zero();
        const Potential& vv = process == "full" ? v : flat;
        for (const TrajectoryEvent& e : t.events) {
          csv.row({e.time, std::string(to_string(e.kind)), e.after.x, e.after.p,
                   hamiltonian(e.after, vv)});
        }
        truncated = t.truncated;
      }
      if (truncated) {
        log_ << "simulate: trajectory hit the event cap\n";
      }
      return kExitPass;
    };
  }

  // -------------------------------------------------------------------------
  std::function<int()> prepare_estimate() {
    const ConfigNode n = detail::section(cfg_.source, root_, "estimate");
    n.allow_only({"estimators", "paths", "x", "p", "h", "f", "h_hat", "t_max"});
    std::vector<Estimator> estimators;
    for (const auto& name : n.strings("estimators", {"killing"})) {
      try {
        estimators.push_back(estimator_from_string(name));
      } catch (const std::invalid_argument& e) {
        n.fail(n.child("estimators"), e.what());
      }
    }
    ResolventQuery base;
    base.n = n.integer("paths", 1000);
    base.h = n.has("h") ? read_modulator(n.object("h"), cfg_.model)
                        : Modulator::low_energy(cfg_.model);
    base.f = n.has("f") ? read_payoff(n.object("f")) : Payoff::indicator_band(1.0, 3.0);
    base.h_hat = n.number("h_hat", 0.0);
    base.t_max = n.number("t_max", base.t_max);
    base.seed = cfg_.seed;
    base.workers = cfg_.workers;
    try {
      base.validate();
    } catch (const std::invalid_argument& e) {
      n.fail(n.path(), e.what());
    }
    const std::vector<double> xs = n.numbers("x", {0.0});
    const std::vector<double> ps = n.numbers("p", {0.0, 2.0, 6.0});
    return [=, this] {
      CsvWriter queries(out_ / "data" / "queries.csv", {"query_id", "x", "p"});
      CsvWriter results(out_ / "data" / "estimates.csv",
                        {"query_id", "estimator", "mean", "stderr", "n", "biased_flag"});
      long id = 0;
      std::uint64_t block = 0;
      for (double x : xs) {
        for (double p : ps) {
          ResolventQuery q = base;
          q.start = PhaseState(x, p);
          queries.row({id, x, p});
          for (Estimator e : estimators) {
            q.estimator = e;
            q.stream_base = (block++) << 32;
            const Estimate est = estimate_resolvent(q, cfg_.model);
            results.row({id, std::string(to_string(e)), est.mean, est.std_err, est.n,
                         std::string(est.biased ? "true" : "false")});
          }
          ++id;
        }
      }
      return kExitPass;
    };
  }

  // -------------------------------------------------------------------------
  std::function<int()> prepare_solve() {
    const ConfigNode n = detail::section(cfg_.source, root_, "solve");
    n.allow_only({"solver", "h", "f", "p_max", "panel_width", "points", "nx", "r_max", "tol"});
    const std::string solver = n.choice("solver", {"momentum", "phase", "fw"}, "momentum");
    const ModelParams& m = cfg_.model;
    if (solver == "momentum" && !m.potential.is_zero()) {
      n.fail(n.child("solver"), "the momentum solver needs a zero potential");
    }
    if (solver == "fw" && n.has("h")) {
      n.fail(n.child("h"), "the FW solver always kills below sqrt(2 l)");
    }
    const Modulator h =
        n.has("h") ? read_modulator(n.object("h"), m) : Modulator::low_energy(m);
    const Payoff f = n.has("f") ? read_payoff(n.object("f")) : Payoff::indicator_band(1.0, 3.0);
    const double p_max = n.number("p_max", default_p_max(m.lambda));
    const double width = n.number("panel_width", solver == "phase" ? 1.0 : 0.5);
    const long points = n.integer("points", solver == "phase" ? 4 : 16);
    const long nx = n.integer("nx", 64);
    const double r_max =
        n.number("r_max", std::max(default_p_max(m.lambda), 2.0 * std::sqrt(2.0 * m.l)));
    const double tol = n.number("tol", solver == "phase" ? 1e-10 : 1e-8);
    if (!(p_max > 0.0) || !(width > 0.0) || points < 1 || nx < 4 || !(r_max > 0.0) ||
        !(tol > 0.0)) {
      n.fail(n.path(), "grid parameters must be positive (nx >= 4)");
    }
    return [=, this] {
      Json residual;
      residual["solver"] = solver;
      if (solver == "momentum") {
        const MomentumGrid grid = make_momentum_grid(p_max, width, static_cast<int>(points),
                                                     momentum_breakpoints(h, f));
        const MomentumSolution sol = solve_momentum_resolvent(
            m.lambda, momentum_view(h, m), momentum_view(f, m), grid);
        CsvWriter csv(out_ / "data" / "solution.csv", {"p", "u"});
        for (std::size_t i = 0; i < grid.size(); ++i) {
          csv.row({grid.nodes[i], sol.u[static_cast<Eigen::Index>(i)]});
        }
        residual["residual"] = json_number(sol.residual);
        residual["tail_mass"] = json_number(sol.tail_mass);
      } else if (solver == "phase") {
        PhaseGrid grid;
        grid.nx = static_cast<int>(nx);
        grid.p = make_momentum_grid(p_max, width, static_cast<int>(points),
                                    momentum_breakpoints(h, f));
        const PhaseSolution sol = solve_phase_space_resolvent(m.lambda, h, f, grid, m, tol);
        CsvWriter csv(out_ / "data" / "solution.csv", {"x", "p", "u"});
        for (int k = 0; k < grid.nx; ++k) {
          for (std::size_t i = 0; i < grid.p.size(); ++i) {
            csv.row({grid.x(k), grid.p.nodes[i], sol.at(k, i)});
          }
        }
        residual["residual"] = json_number(sol.residual);
        residual["iterations"] = sol.iterations;
      } else {
        const FwGrid grid = make_fw_grid(m, r_max, 0.05, width, static_cast<int>(points));
        const CurveFn fhat = [f, m](const CurveState& g) { return hat_map(f, g, m); };
        const FwSolution sol =
            solve_fw_resolvent(m.lambda, fw_default_modulator(m), fhat, grid, m, tol, cfg_.workers);
        CsvWriter csv(out_ / "data" / "solution.csv", {"rho", "branch", "u"});
        for (std::size_t k = 0; k < grid.size(); ++k) {
          const CurveState g = grid.state(k);
          csv.row({g.rho, static_cast<long>(g.eps), sol.at(k)});
        }
        residual["residual"] = json_number(sol.residual);
        residual["tail_mass"] = json_number(sol.tail_mass);
      }
      write_json(out_ / "reports" / "solve_residual.json", residual);
      return kExitPass;
    };
  }

  // -------------------------------------------------------------------------
  std::function<int()> prepare_verify(bool sweep) {
    const VerifySpec spec =
        detail::read_verify(detail::section(cfg_.source, root_, sweep ? "sweep" : "verify"), sweep);
    const ModelParams& m = cfg_.model;
    const double fw_L = spec.fw_L > 0.0 ? spec.fw_L : m.l + 1.0;
    if (!(fw_L > m.l)) {
      root_.fail(std::string(sweep ? "sweep" : "verify") + ".fw_L", "fw_L must exceed l");
    }
    return [=, this] {
      CheckBudget budget;
      budget.paths = spec.paths;
      budget.seed = cfg_.seed;
      budget.workers = cfg_.workers;
      budget.ceiling = spec.ceiling;
      const Potential& v = m.potential;
      std::vector<BoundReport> reports;
      auto want = [&](const char* name) {
        return std::find(spec.checks.begin(), spec.checks.end(), name) != spec.checks.end();
      };
      if (want("theorem")) {
        TheoremCheckConfig c;
        c.lambdas = spec.lambdas;
        c.potential = v;
        c.budget = budget;
        for (auto& r : check_theorem_bound(c)) {
          reports.push_back(std::move(r));
        }
      }
      if (want("low_energy")) {
        LowEnergyCheckConfig c{spec.lambdas, v, spec.L, budget};
        reports.push_back(check_low_energy_integral(c));
      }
      if (want("fw_low_energy")) {
        LowEnergyCheckConfig c{spec.lambdas, v, fw_L, budget};
        reports.push_back(check_fw_low_energy_integral(c));
      }
      DriftCheckConfig drift;
      drift.lambdas = spec.lambdas;
      drift.potential = v;
      drift.ceiling = spec.drift_ceiling;
      if (want("drift_full")) {
        reports.push_back(check_drift_full(drift));
      }
      if (want("drift_skeleton")) {
        reports.push_back(check_drift_skeleton(drift));
      }
      if (want("skeleton_tail")) {
        SkeletonTailSweepConfig c;
        c.lambdas = spec.lambdas;
        c.ref_lambda = spec.tail_ref_lambda;
        c.ref_rho = spec.tail_ref_rho;
        c.ceiling = spec.ceiling;
        c.base.potential = v;
        c.base.samples = spec.tail_samples;
        c.base.seed = cfg_.seed;
        c.base.workers = cfg_.workers;
        const SkeletonTailSweep s = check_skeleton_tail_sweep(c);
        write_skeleton_tail_csv(out_ / "data" / "skeleton_tail.csv", s);
        reports.push_back(s.report);
      }
      if (want("homogenization")) {
        HomogenizationConfig c;
        c.lambdas = spec.lambdas;
        c.potential = v;
        c.budget = budget;
        reports.push_back(check_homogenization_error(c));
      }
      if (want("horseshoe")) {
        HorseshoeConfig c;
        c.lambdas = spec.lambdas;
        c.potential = v;
        c.budget = budget;
        reports.push_back(check_horseshoe(c));
      }
      bool failed = false;
      for (const BoundReport& r : reports) {
        Json j = report_json(r);
        if (r.id == "skeleton_tail") {
          j["envelope_decay"] = 1.0 / 16.0;  // c_hat multiplies e^{-d/16}
        }
        write_json(out_ / "reports" / (r.id + ".json"), j);
        if (!r.probes.empty()) {
          write_probe_csv(out_ / "data" / ("probes_" + r.id + ".csv"), r);
        }
        log_ << (r.pass ? "PASS " : (r.informational ? "INFO " : "FAIL ")) << r.id << '\n';
        failed = failed || (!r.pass && !r.informational);
      }
      write_c_hat_table(out_ / "data" / "c_hat_table.csv", reports);
      return failed ? kExitFailedBound : kExitPass;
    };
  }

  void write_manifest() {
    Json man;
    man["config"] = cfg_.echo;
    man["version"] = kVersion;
    man["seed"] = cfg_.seed;
    man["task"] = cfg_.task;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
    man["timestamp"] = stamp;
    write_json(out_ / "manifest.json", man);
  }

  RunConfig cfg_;
  std::ostream& log_;
  ConfigNode root_;
  std::filesystem::path out_;
};

/// Load, validate, run. Errors are reported on `log` and map to exit code 1.
inline int run(const std::optional<std::string>& config_path, const RunOverrides& ov,
               std::ostream& log = std::cerr) {
  try {
    SourcedJson src = config_path ? load_config_file(*config_path) : SourcedJson{};
    Runner runner(load_run_config(std::move(src), ov), log);
    return runner.run();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
  }
  return kExitError;
}

}  // namespace resolvent_lab
