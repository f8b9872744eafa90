#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "resolvent_lab/level_curves.hpp"
#include "resolvent_lab/model.hpp"
#include "resolvent_lab/parallel.hpp"
#include "resolvent_lab/process.hpp"
#include "resolvent_lab/rng.hpp"
#include "resolvent_lab/sampling.hpp"

namespace resolvent_lab {

enum class Estimator { killing, exp_weight, chain_weights, chain_coins };

inline const char* to_string(Estimator e) noexcept {
  switch (e) {
    case Estimator::killing:
      return "killing";
    case Estimator::exp_weight:
      return "exp_weight";
    case Estimator::chain_weights:
      return "chain_weights";
    case Estimator::chain_coins:
      return "chain_coins";
  }
  return "?";
}

inline Estimator estimator_from_string(const std::string& name) {
  for (Estimator e : {Estimator::killing, Estimator::exp_weight, Estimator::chain_weights,
                      Estimator::chain_coins}) {
    if (name == to_string(e)) {
      return e;
    }
  }
  throw std::invalid_argument("unknown estimator '" + name + "'");
}

/// Monte-Carlo estimate with batch-means standard error.
struct Estimate {
  double mean = 0.0;
  double std_err = 0.0;
  long n = 0;
  bool biased = false;      // some path hit a cap or left the domain
  double bias_bound = 0.0;  // estimated size of the neglected tail
  long truncated_paths = 0;
};

inline constexpr int kBatches = 32;

/// Mean and batch-means standard error of per-path values (32 contiguous
/// batches; plain sample standard error below 64 paths).
inline Estimate summarize(const std::vector<double>& values) {
  Estimate est;
  est.n = static_cast<long>(values.size());
  if (values.empty()) {
    return est;
  }
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  est.mean = sum / n;
  if (values.size() < 2) {
    return est;
  }
  if (values.size() < 2 * kBatches) {
    double ss = 0.0;
    for (double v : values) {
      ss += (v - est.mean) * (v - est.mean);
    }
    est.std_err = std::sqrt(ss / (n - 1.0) / n);
    return est;
  }
  std::vector<double> means(kBatches, 0.0);
  std::vector<double> sizes(kBatches, 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t b = i * kBatches / values.size();
    means[b] += values[i];
    sizes[b] += 1.0;
  }
  // weight batches by size so the batch grand mean equals the sample mean
  double ss = 0.0;
  for (int b = 0; b < kBatches; ++b) {
    means[b] /= sizes[b];
    ss += sizes[b] * (means[b] - est.mean) * (means[b] - est.mean);
  }
  est.std_err = std::sqrt(ss / (kBatches - 1.0) / n);
  return est;
}

/// One resolvent query for the full process.
struct ResolventQuery {
  PhaseState start;
  Modulator h = Modulator::energy_indicator(1.0);
  Payoff f = Payoff::constant(1.0);
  Estimator estimator = Estimator::killing;
  long n = 1000;
  double h_hat = 0.0;  // 0 means "use sup h"
  std::uint64_t seed = 0;
  std::uint64_t stream_base = 0;
  SimConfig caps;
  double t_max = 1e6;           // exp_weight horizon
  double weight_floor = 1e-12;  // chain / exp-weight termination threshold
  int workers = 0;              // 0 means default_workers()

  double majorant() const { return h_hat > 0.0 ? h_hat : h.sup(); }

  void validate() const {
    if (n < 1) {
      throw std::invalid_argument("resolvent query needs n >= 1");
    }
    if (majorant() < h.sup() * (1.0 - 1e-12)) {
      throw std::invalid_argument("h_hat must dominate sup h");
    }
    if (!(t_max > 0.0) || !(weight_floor > 0.0)) {
      throw std::invalid_argument("t_max and weight_floor must be positive");
    }
    caps.validate();
  }
};

namespace detail {

/// Time spent with the momentum in [lo, hi] when p moves linearly from pa to
/// pb over dt.
inline double band_time(double pa, double pb, double lo, double hi, double dt) noexcept {
  if (pa == pb) {
    return pa >= lo && pa <= hi ? dt : 0.0;
  }
  const double a = std::min(pa, pb);
  const double b = std::max(pa, pb);
  const double overlap = std::max(0.0, std::min(b, hi) - std::max(a, lo));
  return dt * overlap / (b - a);
}

/// Approximate integral of f over one flow sub-step a -> b of length dt.
inline double segment_payoff(const Payoff& f, const PhaseState& a, const PhaseState& b, double dt,
                             const ModelParams& params) {
  if (f.is_zero()) {
    return 0.0;
  }
  if (f.kind() == Payoff::Kind::indicator_band) {
    return f.scale() * band_time(a.p, b.p, f.lo(), f.hi(), dt);
  }
  if (f.flow_invariant()) {
    return f(a, params) * dt;
  }
  return 0.5 * (f(a, params) + f(b, params)) * dt;
}

/// Average of f over a sub-step, used when only part of it is kept.
inline double segment_payoff_rate(const Payoff& f, const PhaseState& a, const PhaseState& b,
                                  double dt, const ModelParams& params) {
  return dt > 0.0 ? segment_payoff(f, a, b, dt, params) / dt : f(a, params);
}

/// Advance the walker by `dt` exactly (crossing any collision candidates),
/// feeding sub-steps to `obs`. Returns false if a cap stopped it early.
template <class Obs>
bool advance_exactly(FullWalker& w, double dt, Obs&& obs) {
  const double target = w.time() + dt;
  while (w.time() < target) {
    if (w.capped()) {
      return false;
    }
    if (w.advance(target - w.time(), obs).reached_target) {
      break;
    }
  }
  return true;
}

struct PathResult {
  double value = 0.0;
  bool truncated = false;
  double tail = 0.0;  // leftover survival weight for bias reporting
};

/// int_0^R f(S_r) dr with R the killing time of rate h(S_t).
inline PathResult killing_path(const ResolventQuery& q, const ModelParams& params,
                               RandomStream& rng) {
  PathResult out;
  FullWalker w(params, q.caps, rng, q.start);
  const Payoff& f = q.f;
  if (q.h.flow_invariant()) {
    // h is constant between collisions: exact exponential clock
    double budget = rng.exponential();
    while (true) {
      if (w.capped()) {
        out.truncated = true;
        return out;
      }
      const double rate = q.h(w.state(), params);
      const double until_kill = rate > 0.0 ? budget / rate : q.caps.time_cap;
      const double t0 = w.time();
      const StepResult r = w.advance(until_kill, [&](const PhaseState& a, const PhaseState& b,
                                                     double dt) {
        out.value += segment_payoff(f, a, b, dt, params);
      });
      budget -= rate * (w.time() - t0);
      if (r.reached_target && rate > 0.0) {
        return out;
      }
    }
  }
  // general h: thinning at the constant rate h_hat
  const double hh = q.majorant();
  double next_kill = rng.exponential() / hh;
  while (true) {
    if (w.capped()) {
      out.truncated = true;
      return out;
    }
    const StepResult r = w.advance(next_kill - w.time(), [&](const PhaseState& a,
                                                             const PhaseState& b, double dt) {
      out.value += segment_payoff(f, a, b, dt, params);
    });
    if (r.reached_target) {
      if (rng.uniform() * hh < q.h(w.state(), params)) {
        return out;
      }
      next_kill = w.time() + rng.exponential() / hh;
    }
  }
}

/// int_0^T f(S_t) exp(-int_0^t h) dt, stopped once the weight is negligible.
inline PathResult exp_weight_path(const ResolventQuery& q, const ModelParams& params,
                                  RandomStream& rng) {
  PathResult out;
  FullWalker w(params, q.caps, rng, q.start);
  double log_weight = 0.0;
  const double log_floor = std::log(q.weight_floor);
  auto obs = [&](const PhaseState& a, const PhaseState& b, double dt) {
    const double rate = q.h.flow_invariant() ? q.h(a, params)
                                             : 0.5 * (q.h(a, params) + q.h(b, params));
    const double decay = rate * dt;
    // exact integral of exp(-A) over the sub-step for a constant rate
    const double mass = decay > 1e-12 ? -std::expm1(-decay) / rate : dt * (1.0 - 0.5 * decay);
    out.value += segment_payoff_rate(q.f, a, b, dt, params) * std::exp(log_weight) * mass;
    log_weight -= decay;
  };
  while (log_weight > log_floor) {
    if (w.time() >= q.t_max || w.capped()) {
      out.truncated = true;
      break;
    }
    w.advance(q.t_max - w.time(), obs);
  }
  out.tail = std::exp(log_weight);
  return out;
}

/// Resolvent-chain estimators: chain times with exponential(h_hat) gaps.
inline PathResult chain_path(const ResolventQuery& q, const ModelParams& params, RandomStream& rng,
                             bool coins) {
  PathResult out;
  FullWalker w(params, q.caps, rng, q.start);
  const double hh = q.majorant();
  double product = 1.0;
  auto noop = [](const PhaseState&, const PhaseState&, double) {};
  while (true) {
    if (!advance_exactly(w, rng.exponential() / hh, noop)) {
      out.truncated = true;
      break;
    }
    const PhaseState& s = w.state();
    const double ratio = std::clamp(q.h(s, params) / hh, 0.0, 1.0);
    if (coins) {
      out.value += q.f(s, params);
      if (rng.uniform() < ratio) {
        break;
      }
    } else {
      out.value += product * q.f(s, params);
      product *= 1.0 - ratio;
      if (product < q.weight_floor) {
        break;
      }
    }
  }
  out.value /= hh;
  out.tail = coins ? 0.0 : product;
  return out;
}

template <class PathFn>
Estimate run_paths(long n, std::uint64_t seed, std::uint64_t stream_base, int workers,
                   PathFn&& path) {
  std::vector<double> values(static_cast<std::size_t>(n), 0.0);
  std::vector<char> truncated(values.size(), 0);
  std::vector<double> tails(values.size(), 0.0);
  parallel_for(values.size(), workers > 0 ? workers : default_workers(), [&](std::size_t i) {
    RandomStream rng(seed, stream_base + i);
    const PathResult r = path(rng);
    values[i] = r.value;
    truncated[i] = r.truncated ? 1 : 0;
    tails[i] = r.tail;
  });
  Estimate est = summarize(values);
  double tail_sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    est.truncated_paths += truncated[i];
    tail_sum += tails[i];
  }
  est.biased = est.truncated_paths > 0;
  est.bias_bound = tail_sum / static_cast<double>(values.size());
  return est;
}

}  // namespace detail

/// Killing representation: mean of int_0^R f(S_r) dr.
inline Estimate estimate_killing(const ResolventQuery& q, const ModelParams& params) {
  q.validate();
  return detail::run_paths(q.n, q.seed, q.stream_base, q.workers, [&](RandomStream& rng) {
    return detail::killing_path(q, params, rng);
  });
}

/// Definition: int f(S_t) exp(-int_0^t h) dt. The bias bound is the mean
/// leftover weight times sup f / h_hat, i.e. the tail as if h stayed at h_hat.
inline Estimate estimate_exp_weight(const ResolventQuery& q, const ModelParams& params) {
  q.validate();
  Estimate est = detail::run_paths(q.n, q.seed, q.stream_base, q.workers,
                                   [&](RandomStream& rng) {
                                     return detail::exp_weight_path(q, params, rng);
                                   });
  est.bias_bound *= q.f.sup() / q.majorant();
  return est;
}

/// Chain with products of (1 - h/h_hat) weights, divided by h_hat.
inline Estimate estimate_chain_weights(const ResolventQuery& q, const ModelParams& params) {
  q.validate();
  Estimate est = detail::run_paths(q.n, q.seed, q.stream_base, q.workers,
                                   [&](RandomStream& rng) {
                                     return detail::chain_path(q, params, rng, false);
                                   });
  est.bias_bound *= q.f.sup() / q.majorant();
  return est;
}

/// Chain with h/h_hat coins: sum of f up to the first head, divided by h_hat.
inline Estimate estimate_chain_coins(const ResolventQuery& q, const ModelParams& params) {
  q.validate();
  return detail::run_paths(q.n, q.seed, q.stream_base, q.workers, [&](RandomStream& rng) {
    return detail::chain_path(q, params, rng, true);
  });
}

inline Estimate estimate_resolvent(const ResolventQuery& q, const ModelParams& params) {
  if (q.f.is_zero()) {
    Estimate est;
    est.n = q.n;
    return est;
  }
  switch (q.estimator) {
    case Estimator::killing:
      return estimate_killing(q, params);
    case Estimator::exp_weight:
      return estimate_exp_weight(q, params);
    case Estimator::chain_weights:
      return estimate_chain_weights(q, params);
    case Estimator::chain_coins:
      return estimate_chain_coins(q, params);
  }
  throw std::logic_error("unhandled estimator");
}

/// Resolvent query for the Freidlin-Wentzell process.
struct FwQuery {
  CurveState start{0.0, 1};
  CurveFn f;
  double f_sup = 1.0;
  CurveFn h;  // empty means chi(rho <= sqrt(2 l))
  long n = 1000;
  std::uint64_t seed = 0;
  std::uint64_t stream_base = 0;
  long event_cap = 1000000;
  double exit_rho = -1.0;
  int workers = 0;
};

/// Killing representation on the FW process. The state is constant between
/// jumps, so the integral and the clock are exact. Paths that leave the
/// reduced domain keep their pre-exit integral; the bias bound adds sup f over
/// unit killing rate for each of them.
inline Estimate estimate_fw_resolvent(const FwQuery& q, const ModelParams& params) {
  if (q.n < 1 || !q.f) {
    throw std::invalid_argument("FW query needs a payoff and n >= 1");
  }
  if (!(q.start.rho * q.start.rho > 2.0 * params.l)) {
    throw std::invalid_argument("FW start needs rho0 > sqrt(2 l)");
  }
  const CurveFn h = q.h ? q.h : fw_default_modulator(params);
  const FwSampler sampler(params, q.exit_rho);
  Estimate est = detail::run_paths(
      q.n, q.seed, q.stream_base, q.workers, [&](RandomStream& rng) {
        detail::PathResult out;
        CurveState g = q.start;
        double budget = rng.exponential();
        for (long k = 0;; ++k) {
          if (k >= q.event_cap) {
            out.truncated = true;
            break;
          }
          const FwJump j = sampler.jump(g, rng);
          const double rate = h(g);
          const double fv = q.f(g);
          if (rate > 0.0 && rate * j.wait >= budget) {
            out.value += fv * budget / rate;
            break;
          }
          out.value += fv * j.wait;
          budget -= rate * j.wait;
          g = j.next;
          if (j.exited) {
            out.truncated = true;
            out.tail = 1.0;
            break;
          }
        }
        return out;
      });
  est.bias_bound *= q.f_sup;
  return est;
}

/// Hat of the full resolvent: killing estimates started from eta_gamma.
inline Estimate estimate_hat_resolvent(const CurveState& g, ResolventQuery q,
                                       const ModelParams& params) {
  q.validate();
  if (!is_untrapped(g, params.potential)) {
    throw TrappedOrbitError();
  }
  if (q.f.is_zero()) {
    Estimate est;
    est.n = q.n;
    return est;
  }
  const FwSampler sampler(params);
  return detail::run_paths(q.n, q.seed, q.stream_base, q.workers, [&](RandomStream& rng) {
    ResolventQuery local = q;
    const double x = sampler.sample_orbit_position(g, rng);
    local.start =
        PhaseState(x, g.eps * std::sqrt(g.rho * g.rho - 2.0 * params.potential.value(x)));
    return detail::killing_path(local, params, rng);
  });
}

}  // namespace resolvent_lab
