#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "resolvent_lab/model.hpp"
#include "resolvent_lab/quadrature.hpp"

namespace resolvent_lab {

class SeparatrixError : public std::domain_error {
 public:
  SeparatrixError() : std::domain_error("separatrix state") {}
};

class TrappedOrbitError : public std::domain_error {
 public:
  TrappedOrbitError() : std::domain_error("trapped orbit unsupported here") {}
};

class TwoBranchError : public std::domain_error {
 public:
  TwoBranchError() : std::domain_error("two-branch regime unsupported") {}
};

inline constexpr double kSeparatrixBand = 1e-9;

/// Component of a level curve of H: energy radius rho = sqrt(2H) and label.
///
/// Untrapped orbits (rho^2 > 2 sup V) carry eps = +1 or -1, the sign of the
/// momentum. Trapped orbits carry the index of their well, counted left to
/// right after cutting the torus at the global maximum of V.
struct CurveState {
  double rho = 0.0;
  int eps = 1;

  friend bool operator==(const CurveState&, const CurveState&) = default;
};

/// sqrt(2 sup V): radii above this belong to revolving orbits.
inline double separatrix_radius(const Potential& v) { return std::sqrt(2.0 * v.sup()); }

inline bool is_untrapped(const CurveState& g, const Potential& v) {
  return g.rho * g.rho > 2.0 * v.sup();
}

/// Signed energy radius eps*rho*1{rho >= l}.
inline double quasi_momentum(const CurveState& g, const ModelParams& params) {
  return g.rho >= params.l ? g.eps * g.rho : 0.0;
}

namespace detail {

/// Roots of V(x) = c on the torus, sorted in [0, 1).
inline std::vector<double> level_crossings(const Potential& v, double c, int scan = 1024) {
  std::vector<double> roots;
  if (v.is_zero() || c <= v.inf() || c >= v.sup()) {
    return roots;
  }
  auto g = [&](double x) { return v.value(x) - c; };
  double x0 = 0.0;
  double g0 = g(x0);
  for (int i = 1; i <= scan; ++i) {
    const double x1 = static_cast<double>(i) / scan;
    const double g1 = g(x1);
    if (g0 == 0.0) {
      roots.push_back(x0);
    } else if (g0 * g1 < 0.0) {
      std::uintmax_t iters = 100;
      auto bracket = boost::math::tools::toms748_solve(
          g, x0, x1, g0, g1, boost::math::tools::eps_tolerance<double>(52), iters);
      roots.push_back(wrap_unit(0.5 * (bracket.first + bracket.second)));
    }
    x0 = x1;
    g0 = g1;
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

/// Wells of {V < H} as (left, right) turning points in cut coordinates
/// y = x - argmax V, ordered left to right.
inline std::vector<std::pair<double, double>> wells_below(const Potential& v, double energy) {
  std::vector<std::pair<double, double>> wells;
  const double shift = v.argmax();
  std::vector<double> ys;
  for (double r : level_crossings(v, energy, 2048)) {
    ys.push_back(wrap_unit(r - shift));
  }
  std::sort(ys.begin(), ys.end());
  // V(shift) is the global max, so y=0 lies outside every well and crossings pair up
  for (std::size_t i = 0; i + 1 < ys.size(); i += 2) {
    wells.emplace_back(ys[i], ys[i + 1]);
  }
  return wells;
}

}  // namespace detail

/// Map a phase point to its level-curve component.
inline CurveState curve_state(const PhaseState& s, const ModelParams& params) {
  const Potential& v = params.potential;
  const double h = hamiltonian(s, v);
  if (std::abs(h - v.sup()) < kSeparatrixBand) {
    throw SeparatrixError();
  }
  for (double c : v.critical_levels()) {
    if (std::abs(h - c) < kSeparatrixBand) {
      throw SeparatrixError();
    }
  }
  CurveState g;
  g.rho = std::sqrt(2.0 * h);
  if (h > v.sup()) {
    g.eps = s.p < 0.0 ? -1 : 1;
    return g;
  }
  const double y = wrap_unit(s.x - v.argmax());
  const auto wells = detail::wells_below(v, h);
  int index = 0;
  for (const auto& w : wells) {
    if (w.second < y) {
      ++index;
    }
  }
  g.eps = index;
  return g;
}

/// Quadrature for the orbit measures of one level-curve component.
///
/// `kappa` is the time-weighted occupation measure (density proportional to
/// 1/|p| in x). `eta` is the conditional of Lebesgue measure on the curve,
/// which for a one-degree-of-freedom Hamiltonian coincides with kappa; it is
/// kept as a separate array so callers can state which measure they mean.
/// `period` is the revolution time and `dgamma` the density of the pushforward
/// of Lebesgue measure under the curve map, per unit rho and per branch.
struct CurveQuadrature {
  std::vector<double> x;
  std::vector<double> p;
  std::vector<double> eta;
  std::vector<double> kappa;
  double period = 0.0;
  double dgamma = 0.0;
  bool trapped = false;

  std::size_t size() const noexcept { return x.size(); }

  template <class F>
  double kappa_average(F&& g) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      acc += kappa[i] * g(x[i], p[i]);
    }
    return acc;
  }
};

namespace detail {

/// Panel edges halving in width toward `focus` from `start` down to `smallest`.
inline void graded_edges(double focus, double start, double smallest, double direction,
                         std::vector<double>& edges) {
  for (double w = start; w > smallest; w *= 0.5) {
    edges.push_back(focus + direction * w);
  }
  edges.push_back(focus + direction * smallest);
}

inline CurveQuadrature untrapped_rule(const CurveState& g, const Potential& v, int points,
                                      const std::vector<double>& x_breaks, double grade_rho) {
  constexpr int per_panel = 16;
  const int panels = std::max(1, points / per_panel);
  const double width = 1.0 / panels;
  // work in y = x - argmax V on [-1/2, 1/2]; the speed is smallest at y = 0
  const double top = v.argmax();
  std::vector<double> breaks;
  for (double b : x_breaks) {
    breaks.push_back(wrap_unit(b - top + 0.5) - 0.5);
  }
  if (!v.is_zero()) {
    breaks.push_back(0.0);
    breaks.push_back(wrap_unit(v.argmin() - top + 0.5) - 0.5);
    const double h = 1e-4;
    const double curvature =
        std::max(std::abs(v.derivative(top + h) - v.derivative(top - h)) / (2 * h), 1e-12);
    const double gap = std::min(g.rho, grade_rho) * std::min(g.rho, grade_rho) - 2.0 * v.sup();
    const double core = std::sqrt(std::max(gap, 0.0) / curvature);
    if (core < 0.25 * width) {
      graded_edges(0.0, width, 0.25 * core, 1.0, breaks);
      graded_edges(0.0, width, 0.25 * core, -1.0, breaks);
    }
  }
  const auto rule = gauss_legendre_panels(-0.5, 0.5, width, per_panel, breaks);
  CurveQuadrature q;
  q.x.resize(rule.size());
  q.p.resize(rule.size());
  q.kappa.resize(rule.size());
  const double r2 = g.rho * g.rho;
  double period = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    q.x[i] = wrap_unit(top + rule.nodes[i]);
    const double speed = std::sqrt(r2 - 2.0 * v.value(q.x[i]));
    q.p[i] = g.eps * speed;
    q.kappa[i] = rule.weights[i] / speed;
    period += q.kappa[i];
  }
  for (double& w : q.kappa) {
    w /= period;
  }
  q.eta = q.kappa;
  q.period = period;
  q.dgamma = g.rho * period;
  return q;
}

inline CurveQuadrature trapped_rule(const CurveState& g, const Potential& v, int points,
                                    const std::vector<double>& x_breaks) {
  const double energy = 0.5 * g.rho * g.rho;
  const auto wells = wells_below(v, energy);
  if (g.eps < 0 || static_cast<std::size_t>(g.eps) >= wells.size()) {
    throw std::invalid_argument("no well with label " + std::to_string(g.eps) +
                                " at this energy");
  }
  const double shift = v.argmax();
  const double lo = wells[g.eps].first + shift;
  const double hi = wells[g.eps].second + shift;
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  // x = mid + half sin(theta) removes the inverse square-root endpoint singularities
  std::vector<double> theta_breaks;
  for (double b : x_breaks) {
    for (double shifted : {b - 1.0, b, b + 1.0}) {
      if (shifted > lo && shifted < hi) {
        theta_breaks.push_back(std::asin(std::clamp((shifted - mid) / half, -1.0, 1.0)));
      }
    }
  }
  constexpr int per_panel = 16;
  const int panels = std::max(1, points / (2 * per_panel));
  const double a = -0.5 * std::numbers::pi;
  const double b = 0.5 * std::numbers::pi;
  // near the separatrix the turning points sit close to a saddle
  const double depth = 2.0 * (v.sup() - energy);
  const double edge = std::max(1e-7, 0.25 * std::sqrt(std::sqrt(std::max(depth, 0.0))));
  const double width = (b - a) / panels;
  if (edge < 0.25 * width) {
    graded_edges(a, width, edge, 1.0, theta_breaks);
    graded_edges(b, width, edge, -1.0, theta_breaks);
  }
  const auto rule = gauss_legendre_panels(a, b, (b - a) / panels, per_panel, theta_breaks);
  CurveQuadrature q;
  q.trapped = true;
  double half_period = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double th = rule.nodes[i];
    const double x = mid + half * std::sin(th);
    const double speed2 = 2.0 * (energy - v.value(x));
    const double speed = std::sqrt(std::max(speed2, 0.0));
    double w = 0.0;
    if (speed > 0.0) {
      w = rule.weights[i] * half * std::cos(th) / speed;
    }
    half_period += w;
    for (double sgn : {1.0, -1.0}) {
      q.x.push_back(wrap_unit(x));
      q.p.push_back(sgn * speed);
      q.kappa.push_back(0.5 * w);
    }
  }
  for (double& w : q.kappa) {
    w /= half_period;
  }
  q.eta = q.kappa;
  q.period = 2.0 * half_period;
  q.dgamma = g.rho * q.period;
  return q;
}

/// x positions where |p| on the orbit crosses one of the given momentum magnitudes.
inline std::vector<double> momentum_crossings(const CurveState& g, const Potential& v,
                                              const std::vector<double>& momenta) {
  std::vector<double> out;
  const double r2 = g.rho * g.rho;
  for (double m : momenta) {
    const double c = 0.5 * (r2 - m * m);
    const auto roots = level_crossings(v, c);
    out.insert(out.end(), roots.begin(), roots.end());
  }
  return out;
}

}  // namespace detail

/// Orbit quadrature with `points` nodes (at least), aligned to `x_breaks`.
///
/// Panels are graded toward the top of the potential, where the speed on
/// the orbit (or on a target orbit of radius `grade_rho`, if smaller) is lowest.
inline CurveQuadrature curve_quadrature(const CurveState& g, const ModelParams& params,
                                        int points = 512, const std::vector<double>& x_breaks = {},
                                        double grade_rho = std::numeric_limits<double>::infinity()) {
  const Potential& v = params.potential;
  if (!(g.rho >= 0.0)) {
    throw std::invalid_argument("curve radius must be nonnegative");
  }
  const double gap = 0.5 * g.rho * g.rho - v.sup();
  if (std::abs(gap) < kSeparatrixBand) {
    throw SeparatrixError();
  }
  if (gap > 0.0) {
    return detail::untrapped_rule(g, v, points, x_breaks, grade_rho);
  }
  return detail::trapped_rule(g, v, points, x_breaks);
}

/// Orbit period: integral over the torus of dx / sqrt(rho^2 - 2V).
inline double orbit_period(const CurveState& g, const ModelParams& params) {
  if (params.potential.is_zero()) {
    return 1.0 / g.rho;
  }
  double prev = curve_quadrature(g, params, 512).period;
  for (int points = 1024; points <= 16384; points *= 2) {
    const double next = curve_quadrature(g, params, points).period;
    if (std::abs(next - prev) <= 1e-13 * next) {
      return next;
    }
    prev = next;
  }
  return prev;
}

/// Density of d gamma with respect to d rho on one branch: rho * period.
inline double dgamma_density(double rho, const ModelParams& params) {
  if (params.potential.is_zero()) {
    return 1.0;
  }
  return rho * orbit_period(CurveState{rho, 1}, params);
}

/// kappa_gamma density in x on an untrapped orbit.
inline double kappa_density(const CurveState& g, double x, const ModelParams& params) {
  if (!is_untrapped(g, params.potential)) {
    throw TrappedOrbitError();
  }
  const double speed = std::sqrt(g.rho * g.rho - 2.0 * params.potential.value(x));
  return 1.0 / (speed * orbit_period(g, params));
}

namespace detail {

/// Repeatedly double the orbit rule until `eval` settles to `tol` (relative).
template <class Eval>
double converge_on_orbit(const CurveState& g, const ModelParams& params,
                         const std::vector<double>& x_breaks, double tol, Eval&& eval,
                         double grade_rho = std::numeric_limits<double>::infinity()) {
  if (params.potential.is_zero()) {
    return eval(curve_quadrature(g, params, 16, x_breaks));
  }
  double prev = eval(curve_quadrature(g, params, 512, x_breaks, grade_rho));
  for (int points = 1024; points <= 32768; points *= 2) {
    const double next = eval(curve_quadrature(g, params, points, x_breaks, grade_rho));
    if (std::abs(next - prev) <= tol * std::max(1.0, std::abs(next))) {
      return next;
    }
    prev = next;
  }
  throw QuadratureError("orbit quadrature did not settle (state near a separatrix?)");
}

}  // namespace detail

/// Orbit average of f under the orbit measure of gamma.
inline double hat_map(const Payoff& f, const CurveState& g, const ModelParams& params,
                      double tol = 1e-9) {
  if (f.is_zero()) {
    return 0.0;
  }
  if (f.flow_invariant()) {
    // constant along the orbit: any point on it will do
    const auto q = curve_quadrature(g, params, 16);
    return f(PhaseState(q.x[0], q.p[0]), params);
  }
  const auto breaks = detail::momentum_crossings(g, params.potential, [&] {
    std::vector<double> m;
    for (double b : f.momentum_breakpoints()) {
      m.push_back(std::abs(b));
    }
    return m;
  }());
  return detail::converge_on_orbit(g, params, breaks, tol, [&](const CurveQuadrature& q) {
    return q.kappa_average([&](double x, double p) { return f(PhaseState(x, p), params); });
  });
}

/// Reduced escape rate: kappa-average of E_lambda(p) along the orbit.
inline double fw_escape_rate(double lambda, const CurveState& g, const ModelParams& params) {
  if (!is_untrapped(g, params.potential)) {
    throw TrappedOrbitError();
  }
  if (params.potential.is_zero()) {
    return escape_rate(lambda, g.rho);
  }
  return detail::converge_on_orbit(g, params, {}, 1e-10, [&](const CurveQuadrature& q) {
    return q.kappa_average([&](double, double p) { return escape_rate(lambda, p); });
  });
}

/// Reduced jump rate density from gamma to (rho', eps') per unit rho'.
inline double fw_jump_density_rho(double lambda, const CurveState& g, double rho_new, int eps_new,
                                  const ModelParams& params, double tol = 1e-9) {
  const Potential& v = params.potential;
  if (!is_untrapped(g, v)) {
    throw TrappedOrbitError();
  }
  if (!(rho_new * rho_new > 2.0 * v.sup())) {
    throw TwoBranchError();
  }
  if (v.is_zero()) {
    return jump_kernel(lambda, g.eps * g.rho, eps_new * rho_new);
  }
  const double r2 = rho_new * rho_new;
  return detail::converge_on_orbit(g, params, {}, tol, [&](const CurveQuadrature& q) {
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double speed = std::sqrt(r2 - 2.0 * v.value(q.x[i]));
      acc += q.kappa[i] * jump_kernel(lambda, q.p[i], eps_new * speed) * rho_new / speed;
    }
    return acc;
  }, rho_new);
}

/// Reduced jump kernel, density with respect to d gamma'.
inline double fw_jump_kernel(double lambda, const CurveState& g, const CurveState& g_new,
                             const ModelParams& params) {
  const double per_rho = fw_jump_density_rho(lambda, g, g_new.rho, g_new.eps, params);
  return per_rho / dgamma_density(g_new.rho, params);
}

/// Skeleton transition density (jump kernel over escape rate).
inline double fw_skeleton_kernel(double lambda, const CurveState& g, const CurveState& g_new,
                                 const ModelParams& params) {
  return fw_jump_kernel(lambda, g, g_new, params) / fw_escape_rate(lambda, g, params);
}

/// Rate of jumps from gamma into rho' in [r_lo, r_hi] on branch eps'.
///
/// Exact in p' through the closed-form kernel mass; only the orbit average is
/// numerical. Radii below the separatrix are clipped away.
inline double fw_bin_rate(double lambda, const CurveState& g, int eps_new, double r_lo,
                          double r_hi, const ModelParams& params) {
  const Potential& v = params.potential;
  if (!is_untrapped(g, v)) {
    throw TrappedOrbitError();
  }
  const double floor2 = 2.0 * v.sup();
  const double lo2 = std::max(r_lo * r_lo, floor2);
  const double hi2 = r_hi * r_hi;
  if (!(hi2 > lo2)) {
    return 0.0;
  }
  auto eval = [&](const CurveQuadrature& q) {
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double two_v = 2.0 * v.value(q.x[i]);
      const double a = std::sqrt(std::max(lo2 - two_v, 0.0));
      const double b = std::isfinite(hi2) ? std::sqrt(hi2 - two_v)
                                          : std::numeric_limits<double>::infinity();
      acc += q.kappa[i] * (eps_new > 0 ? jump_kernel_mass(lambda, q.p[i], a, b)
                                       : jump_kernel_mass(lambda, q.p[i], -b, -a));
    }
    return acc;
  };
  if (v.is_zero()) {
    return eval(curve_quadrature(g, params, 16));
  }
  return detail::converge_on_orbit(g, params, {}, 1e-10, eval);
}

/// Rate of jumps from gamma onto orbits at or below the separatrix.
inline double fw_exit_rate(double lambda, const CurveState& g, const ModelParams& params) {
  const Potential& v = params.potential;
  if (!is_untrapped(g, v)) {
    throw TrappedOrbitError();
  }
  if (v.sup() <= 0.0) {
    return 0.0;
  }
  const double floor2 = 2.0 * v.sup();
  return detail::converge_on_orbit(g, params, {}, 1e-10, [&](const CurveQuadrature& q) {
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double m = std::sqrt(std::max(floor2 - 2.0 * v.value(q.x[i]), 0.0));
      acc += q.kappa[i] * jump_kernel_mass(lambda, q.p[i], -m, m);
    }
    return acc;
  });
}

/// Functions on orbit labels.
using CurveFn = std::function<double(const CurveState&)>;

/// The default FW killing rate chi(rho <= sqrt(2 l)).
inline CurveFn fw_default_modulator(const ModelParams& params) {
  const double r = std::sqrt(2.0 * params.l);
  return [r](const CurveState& g) { return g.rho <= r ? 1.0 : 0.0; };
}

}  // namespace resolvent_lab
