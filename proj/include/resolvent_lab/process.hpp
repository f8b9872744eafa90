#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "resolvent_lab/level_curves.hpp"
#include "resolvent_lab/model.hpp"
#include "resolvent_lab/rng.hpp"
#include "resolvent_lab/sampling.hpp"

namespace resolvent_lab {

class FlowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Integrator step control and per-path caps.
struct SimConfig {
  double max_step = 0.05;      // time step cap
  double phase_step = 0.04;    // cap on |p| * step (distance travelled per step)
  double energy_tol = 1e-9;    // allowed |dH| per unit time
  int max_halvings = 8;
  long event_cap = 1000000;
  double time_cap = 1e6;

  void validate() const {
    if (!(max_step > 0.0) || !(phase_step > 0.0) || !(energy_tol > 0.0) || event_cap < 1 ||
        !(time_cap > 0.0) || max_halvings < 0) {
      throw std::invalid_argument("simulation config needs positive tolerances and caps");
    }
  }
};

enum class EventKind { collision, vacuous, boundary_sample, exit };

inline const char* to_string(EventKind k) noexcept {
  switch (k) {
    case EventKind::collision:
      return "collision";
    case EventKind::vacuous:
      return "vacuous";
    case EventKind::boundary_sample:
      return "boundary_sample";
    case EventKind::exit:
      return "exit";
  }
  return "?";
}

struct TrajectoryEvent {
  double time = 0.0;
  EventKind kind = EventKind::boundary_sample;
  PhaseState before;
  PhaseState after;
};

struct Trajectory {
  std::vector<TrajectoryEvent> events;
  bool truncated = false;
};

namespace detail {

// sixth-order Yoshida composition weights (solution A)
inline constexpr double kYoshida1 = -1.17767998417887;
inline constexpr double kYoshida2 = 0.235573213359357;
inline constexpr double kYoshida3 = 0.784513610477560;
inline constexpr double kYoshida0 = 1.0 - 2.0 * (kYoshida1 + kYoshida2 + kYoshida3);
inline constexpr double kYoshida[7] = {kYoshida3, kYoshida2, kYoshida1, kYoshida0,
                                       kYoshida1, kYoshida2, kYoshida3};

/// One composed step of size h on unwrapped coordinates (x, p).
inline void yoshida_step(double& x, double& p, double h, const Potential& v) {
  double force = -v.derivative(x);
  for (int k = 0; k < 7; ++k) {
    const double hk = kYoshida[k] * h;
    p += 0.5 * hk * force;
    x += hk * p;
    force = -v.derivative(x);
    p += 0.5 * hk * force;
  }
}

inline int flow_steps(const PhaseState& s, double dt, const Potential& v, const SimConfig& cfg) {
  const double speed = std::sqrt(2.0 * std::max(hamiltonian(s, v) - v.inf(), 0.0));
  double h = cfg.max_step;
  if (speed > 0.0) {
    h = std::min(h, cfg.phase_step / speed);
  }
  const double n = std::ceil(dt / h - 1e-12);
  if (n > 1e9) {
    throw FlowError("flow segment needs too many steps");
  }
  return std::max(1, static_cast<int>(n));
}

inline double energy_allowance(double energy, double dt, const SimConfig& cfg) {
  return cfg.energy_tol * (1.0 + dt) + 64.0 * std::numeric_limits<double>::epsilon() * energy;
}

}  // namespace detail

/// Integrate x' = p, p' = -V'(x) for time dt and record the step endpoints.
///
/// `path` receives the start state followed by every step endpoint. Steps are
/// halved and the segment redone while the energy drift exceeds its allowance.
inline PhaseState integrate_flow_path(const PhaseState& s, double dt, const ModelParams& params,
                                      const SimConfig& cfg, std::vector<PhaseState>& path) {
  if (!(dt >= 0.0)) {
    throw std::invalid_argument("integrate_flow: dt must be nonnegative");
  }
  path.clear();
  path.push_back(s);
  const Potential& v = params.potential;
  if (dt == 0.0) {
    return s;
  }
  if (v.is_zero()) {
    const PhaseState out(s.x + s.p * dt, s.p);
    path.push_back(out);
    return out;
  }
  const double h0 = hamiltonian(s, v);
  int steps = detail::flow_steps(s, dt, v, cfg);
  for (int attempt = 0; attempt <= cfg.max_halvings; ++attempt) {
    path.resize(1);
    const double h = dt / steps;
    double x = s.x;
    double p = s.p;
    for (int i = 0; i < steps; ++i) {
      detail::yoshida_step(x, p, h, v);
      path.emplace_back(x, p);
    }
    const PhaseState out = path.back();
    if (std::abs(hamiltonian(out, v) - h0) <= detail::energy_allowance(h0, dt, cfg)) {
      return out;
    }
    steps *= 2;
  }
  throw FlowError("energy drift above tolerance after step halving");
}

/// Hamiltonian flow for time dt with torus wrap.
inline PhaseState integrate_flow(const PhaseState& s, double dt, const ModelParams& params,
                                 const SimConfig& cfg = {}) {
  std::vector<PhaseState> path;
  return integrate_flow_path(s, dt, params, cfg, path);
}

/// Outcome of one FullWalker::advance call.
struct StepResult {
  bool reached_target = true;
  EventKind kind = EventKind::boundary_sample;
  PhaseState before;
};

/// Incremental simulator of the full process on the cylinder.
///
/// Collision candidates arrive at the constant shell majorant rate and are
/// accepted with probability E(p)/majorant, using the momentum obtained by
/// integrating the flow up to the candidate time.
class FullWalker {
 public:
  FullWalker(const ModelParams& params, const SimConfig& cfg, RandomStream& rng, PhaseState s0,
             double t0 = 0.0)
      : params_(&params), cfg_(&cfg), rng_(&rng), state_(s0), time_(t0) {
    reset_clock();
  }

  const PhaseState& state() const noexcept { return state_; }
  double time() const noexcept { return time_; }
  long events() const noexcept { return events_; }
  long collisions() const noexcept { return collisions_; }
  double majorant() const noexcept { return majorant_; }
  double next_candidate() const noexcept { return next_candidate_; }

  /// True once a per-path cap (events or time) has been reached.
  bool capped() const noexcept { return events_ >= cfg_->event_cap || time_ >= cfg_->time_cap; }

  /// Flow for at most max_dt, stopping early at the next collision candidate.
  ///
  /// `obs(a, b, dt)` sees every flow sub-step (a single exact step for V = 0).
  template <class Obs>
  StepResult advance(double max_dt, Obs&& obs) {
    StepResult out;
    const double target = time_ + max_dt;
    const bool to_candidate = next_candidate_ <= target;
    const double stop = to_candidate ? next_candidate_ : target;
    const double dt = stop - time_;
    if (dt > 0.0) {
      integrate_flow_path(state_, dt, *params_, *cfg_, path_);
      const double h = dt / static_cast<double>(path_.size() - 1);
      for (std::size_t i = 0; i + 1 < path_.size(); ++i) {
        obs(path_[i], path_[i + 1], h);
      }
      state_ = path_.back();
    }
    time_ = stop;
    if (!to_candidate) {
      return out;
    }
    out.reached_target = false;
    out.before = state_;
    ++events_;
    const double lambda = params_->lambda;
    if (accept_candidate(lambda, state_.p, majorant_, *rng_)) {
      state_.p = sample_post_collision(lambda, state_.p, *rng_);
      ++collisions_;
      out.kind = EventKind::collision;
      reset_clock();
    } else {
      out.kind = EventKind::vacuous;
      next_candidate_ = time_ + rng_->exponential() / majorant_;
    }
    return out;
  }

  StepResult advance(double max_dt) {
    return advance(max_dt, [](const PhaseState&, const PhaseState&, double) {});
  }

 private:
  void reset_clock() {
    majorant_ = shell_majorant(params_->lambda, hamiltonian(state_, params_->potential),
                               params_->potential) *
                (1.0 + kMajorantSlack);
    next_candidate_ = time_ + rng_->exponential() / majorant_;
  }

  const ModelParams* params_;
  const SimConfig* cfg_;
  RandomStream* rng_;
  PhaseState state_;
  double time_;
  double majorant_ = 0.0;
  double next_candidate_ = 0.0;
  long events_ = 0;
  long collisions_ = 0;
  std::vector<PhaseState> path_;
};

/// Full-process trajectory on [0, horizon]; events are collisions and
/// vacuous candidates, bracketed by boundary samples.
inline Trajectory simulate_full(const PhaseState& s0, double horizon, const ModelParams& params,
                                const SimConfig& cfg, RandomStream& rng) {
  cfg.validate();
  if (!(horizon >= 0.0)) {
    throw std::invalid_argument("horizon must be nonnegative");
  }
  Trajectory traj;
  traj.events.push_back({0.0, EventKind::boundary_sample, s0, s0});
  if (horizon == 0.0) {
    return traj;
  }
  FullWalker walker(params, cfg, rng, s0);
  while (walker.time() < horizon) {
    if (walker.capped()) {
      traj.truncated = true;
      break;
    }
    const StepResult r = walker.advance(horizon - walker.time());
    if (r.reached_target) {
      break;
    }
    traj.events.push_back({walker.time(), r.kind, r.before, walker.state()});
  }
  traj.events.push_back(
      {walker.time(), EventKind::boundary_sample, walker.state(), walker.state()});
  return traj;
}

/// Position of a full-process path at time `horizon` (no event log).
inline PhaseState simulate_full_endpoint(const PhaseState& s0, double horizon,
                                         const ModelParams& params, const SimConfig& cfg,
                                         RandomStream& rng, bool* truncated = nullptr) {
  FullWalker walker(params, cfg, rng, s0);
  while (walker.time() < horizon) {
    if (walker.capped()) {
      if (truncated != nullptr) {
        *truncated = true;
      }
      break;
    }
    if (walker.advance(horizon - walker.time()).reached_target) {
      break;
    }
  }
  return walker.state();
}

/// Pure-jump momentum process: waits at rate E_lambda(p), jumps by the collision law.
inline Trajectory simulate_momentum_only(double p0, double horizon, double lambda,
                                         RandomStream& rng, long event_cap = 1000000) {
  if (!(horizon >= 0.0)) {
    throw std::invalid_argument("horizon must be nonnegative");
  }
  Trajectory traj;
  const PhaseState start(0.0, p0);
  traj.events.push_back({0.0, EventKind::boundary_sample, start, start});
  double t = 0.0;
  double p = p0;
  long n = 0;
  while (true) {
    const double wait = rng.exponential() / escape_rate(lambda, p);
    if (t + wait >= horizon) {
      break;
    }
    if (n >= event_cap) {
      traj.truncated = true;
      break;
    }
    t += wait;
    const double q = sample_post_collision(lambda, p, rng);
    traj.events.push_back({t, EventKind::collision, PhaseState(0.0, p), PhaseState(0.0, q)});
    p = q;
    ++n;
  }
  const PhaseState end(0.0, p);
  traj.events.push_back({std::max(t, horizon), EventKind::boundary_sample, end, end});
  return traj;
}

/// One Freidlin-Wentzell jump: holding time, the new state, and the orbit
/// point where the collision happened.
struct FwJump {
  double wait = 0.0;
  CurveState next;
  double x = 0.0;
  double p_before = 0.0;
  double p_after = 0.0;
  bool exited = false;
};

/// Sampler of the Freidlin-Wentzell jump process on untrapped orbits.
///
/// A jump from gamma is the composition of a collision position x drawn from
/// kappa_gamma, the orbit momentum p(x), and a collision outcome p'; candidate
/// positions are thinned at rate E(p(x)) / E(sqrt(rho^2 - 2 inf V)), so the
/// accepted jump times form a Poisson process of rate fw_escape_rate.
class FwSampler {
 public:
  explicit FwSampler(const ModelParams& params, double exit_rho = -1.0)
      : params_(&params),
        exit_rho2_(exit_rho >= 0.0 ? exit_rho * exit_rho : 2.0 * params.potential.sup()) {
    if (exit_rho2_ < 2.0 * params.potential.sup()) {
      throw std::invalid_argument("FW exit radius must not lie below the separatrix");
    }
  }

  double exit_radius() const noexcept { return std::sqrt(exit_rho2_); }

  /// Orbit position distributed as kappa_gamma (rejection from uniform x).
  double sample_orbit_position(const CurveState& g, RandomStream& rng) const {
    const Potential& v = params_->potential;
    if (v.is_zero()) {
      return rng.uniform();
    }
    const double r2 = g.rho * g.rho;
    const double slowest = std::sqrt(r2 - 2.0 * v.sup());
    for (long iter = 0; iter < kRejectionCap; ++iter) {
      const double x = rng.uniform();
      const double speed = std::sqrt(r2 - 2.0 * v.value(x));
      if (rng.uniform() * speed < slowest) {
        return x;
      }
    }
    throw SamplerError("orbit position sampler exceeded its iteration cap");
  }

  FwJump jump(const CurveState& g, RandomStream& rng) const {
    const Potential& v = params_->potential;
    const double lambda = params_->lambda;
    if (!is_untrapped(g, v)) {
      throw TrappedOrbitError();
    }
    const double r2 = g.rho * g.rho;
    const double majorant = escape_rate(lambda, std::sqrt(r2 - 2.0 * v.inf()));
    FwJump out;
    for (long iter = 0;; ++iter) {
      if (iter >= kRejectionCap) {
        throw SamplerError("FW thinning exceeded its iteration cap");
      }
      out.wait += rng.exponential() / majorant;
      const double x = sample_orbit_position(g, rng);
      const double p = g.eps * std::sqrt(r2 - 2.0 * v.value(x));
      if (accept_candidate(lambda, p, majorant, rng)) {
        out.x = x;
        out.p_before = p;
        break;
      }
    }
    out.p_after = sample_post_collision(lambda, out.p_before, rng);
    const double new_r2 = out.p_after * out.p_after + 2.0 * v.value(out.x);
    out.next = CurveState{std::sqrt(new_r2), out.p_after < 0.0 ? -1 : 1};
    out.exited = new_r2 <= exit_rho2_;
    return out;
  }

 private:
  const ModelParams* params_;
  double exit_rho2_;
};

struct FwEvent {
  double time = 0.0;
  CurveState state;
  bool exited = false;
};

struct FwTrajectory {
  std::vector<FwEvent> events;
  bool exited = false;
  bool truncated = false;
};

/// Freidlin-Wentzell trajectory on [0, horizon], stopped at reduced-domain exit.
inline FwTrajectory simulate_fw(const CurveState& g0, double horizon, const ModelParams& params,
                                RandomStream& rng, long event_cap = 1000000,
                                double exit_rho = -1.0) {
  if (!(g0.rho * g0.rho > 2.0 * params.l)) {
    throw std::invalid_argument("FW start needs rho0 > sqrt(2 l)");
  }
  FwSampler sampler(params, exit_rho);
  FwTrajectory traj;
  traj.events.push_back({0.0, g0, false});
  double t = 0.0;
  CurveState g = g0;
  for (long n = 0;; ++n) {
    if (n >= event_cap) {
      traj.truncated = true;
      break;
    }
    const FwJump j = sampler.jump(g, rng);
    if (t + j.wait >= horizon) {
      break;
    }
    t += j.wait;
    g = j.next;
    traj.events.push_back({t, g, j.exited});
    if (j.exited) {
      traj.exited = true;
      break;
    }
  }
  return traj;
}

}  // namespace resolvent_lab
