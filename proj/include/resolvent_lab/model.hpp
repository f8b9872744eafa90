#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "resolvent_lab/quadrature.hpp"

namespace resolvent_lab {

inline constexpr double kSqrt2Pi = 2.5066282746310002;

/// Reduce a torus coordinate into [0, 1).
inline double wrap_unit(double x) noexcept {
  double r = x - std::floor(x);
  if (r >= 1.0) {
    r = 0.0;
  }
  return r;
}

/// A point on the cylinder: torus coordinate and momentum.
struct PhaseState {
  double x = 0.0;
  double p = 0.0;

  PhaseState() = default;
  PhaseState(double x_in, double p_in) noexcept : x(wrap_unit(x_in)), p(p_in) {}
};

enum class PotentialKind { zero, cosine, tabulated };

/// Periodic nonnegative potential on the unit torus.
///
/// The cosine kind is V(x) = (v0/2)(1 - cos 2 pi x), so sup V = v0 at x = 1/2
/// and inf V = 0 at x = 0. Tabulated potentials are interpolated by periodic
/// cubic Hermite splines through the supplied (x, V, dV/dx) samples; the
/// derivative evaluator is the exact derivative of that interpolant.
class Potential {
 public:
  static Potential zero() { return Potential(PotentialKind::zero); }

  static Potential cosine(double v0) {
    if (!(v0 >= 0.0) || !std::isfinite(v0)) {
      throw std::invalid_argument("cosine potential needs v0 >= 0");
    }
    Potential pot(PotentialKind::cosine);
    pot.v0_ = v0;
    pot.sup_ = v0;
    pot.inf_ = 0.0;
    pot.argmax_ = 0.5;
    pot.argmin_ = 0.0;
    if (v0 > 0.0) {
      pot.critical_levels_ = {v0};
    }
    return pot;
  }

  static Potential tabulated(std::vector<double> xs, std::vector<double> vs,
                             std::vector<double> dvs) {
    if (xs.size() < 3 || xs.size() != vs.size() || xs.size() != dvs.size()) {
      throw std::invalid_argument("tabulated potential needs >= 3 matching samples");
    }
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!(xs[i] >= 0.0 && xs[i] < 1.0) || (i > 0 && !(xs[i] > xs[i - 1]))) {
        throw std::invalid_argument("tabulated potential grid must be increasing in [0,1)");
      }
      if (!std::isfinite(vs[i]) || !std::isfinite(dvs[i])) {
        throw std::invalid_argument("tabulated potential samples must be finite");
      }
    }
    Potential pot(PotentialKind::tabulated);
    pot.table_ = std::make_shared<Table>(Table{std::move(xs), std::move(vs), std::move(dvs)});
    pot.analyse_table();
    return pot;
  }

  PotentialKind kind() const noexcept { return kind_; }
  double v0() const noexcept { return v0_; }

  double value(double x) const noexcept {
    switch (kind_) {
      case PotentialKind::zero:
        return 0.0;
      case PotentialKind::cosine:
        return 0.5 * v0_ * (1.0 - std::cos(2.0 * std::numbers::pi * x));
      case PotentialKind::tabulated:
        return hermite(wrap_unit(x)).first;
    }
    return 0.0;
  }

  double derivative(double x) const noexcept {
    switch (kind_) {
      case PotentialKind::zero:
        return 0.0;
      case PotentialKind::cosine:
        return std::numbers::pi * v0_ * std::sin(2.0 * std::numbers::pi * x);
      case PotentialKind::tabulated:
        return hermite(wrap_unit(x)).second;
    }
    return 0.0;
  }

  double sup() const noexcept { return sup_; }
  double inf() const noexcept { return inf_; }
  double argmax() const noexcept { return argmax_; }
  double argmin() const noexcept { return argmin_; }
  bool is_zero() const noexcept {
    return kind_ == PotentialKind::zero || (kind_ == PotentialKind::cosine && v0_ == 0.0);
  }

  /// Energies of local maxima of V; level curves there contain saddle points.
  const std::vector<double>& critical_levels() const noexcept { return critical_levels_; }

  /// Largest |dV/dx| over a dense grid (used for integrator step control).
  double max_abs_second_derivative() const {
    if (kind_ == PotentialKind::zero) {
      return 0.0;
    }
    if (kind_ == PotentialKind::cosine) {
      return 2.0 * std::numbers::pi * std::numbers::pi * v0_;
    }
    double m = 0.0;
    constexpr int n = 4096;
    const double h = 1e-5;
    for (int i = 0; i < n; ++i) {
      const double x = (i + 0.5) / n;
      m = std::max(m, std::abs((derivative(x + h) - derivative(x - h)) / (2 * h)));
    }
    return m;
  }

 private:
  struct Table {
    std::vector<double> x;
    std::vector<double> v;
    std::vector<double> dv;
  };

  explicit Potential(PotentialKind kind) : kind_(kind) {}

  std::pair<double, double> hermite(double x) const noexcept {
    const auto& t = *table_;
    const std::size_t n = t.x.size();
    auto it = std::upper_bound(t.x.begin(), t.x.end(), x);
    std::size_t hi = static_cast<std::size_t>(it - t.x.begin());
    std::size_t lo = 0;
    double x0 = 0.0;
    double x1 = 0.0;
    if (hi == 0) {
      lo = n - 1;
      hi = 0;
      x0 = t.x[lo] - 1.0;
      x1 = t.x[0];
    } else if (hi == n) {
      lo = n - 1;
      hi = 0;
      x0 = t.x[lo];
      x1 = t.x[0] + 1.0;
    } else {
      lo = hi - 1;
      x0 = t.x[lo];
      x1 = t.x[hi];
    }
    const double dx = x1 - x0;
    const double s = (x - x0) / dx;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    const double v = h00 * t.v[lo] + h10 * dx * t.dv[lo] + h01 * t.v[hi] + h11 * dx * t.dv[hi];
    const double d00 = 6 * s2 - 6 * s;
    const double d10 = 3 * s2 - 4 * s + 1;
    const double d01 = -6 * s2 + 6 * s;
    const double d11 = 3 * s2 - 2 * s;
    const double dv =
        (d00 * t.v[lo] + d01 * t.v[hi]) / dx + d10 * t.dv[lo] + d11 * t.dv[hi];
    return {v, dv};
  }

  double refine_extremum(double x, bool maximum) const {
    // golden-section on a small bracket around a grid extremum
    constexpr double g = 0.6180339887498949;
    double a = x - 1.0 / 2048;
    double b = x + 1.0 / 2048;
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    auto score = [&](double y) { return maximum ? value(y) : -value(y); };
    for (int i = 0; i < 80; ++i) {
      if (score(c) > score(d)) {
        b = d;
      } else {
        a = c;
      }
      c = b - g * (b - a);
      d = a + g * (b - a);
    }
    return wrap_unit(0.5 * (a + b));
  }

  void analyse_table() {
    constexpr int n = 4096;
    std::vector<double> vals(n);
    for (int i = 0; i < n; ++i) {
      vals[i] = value(static_cast<double>(i) / n);
    }
    const auto max_it = std::max_element(vals.begin(), vals.end());
    const auto min_it = std::min_element(vals.begin(), vals.end());
    argmax_ = refine_extremum(static_cast<double>(max_it - vals.begin()) / n, true);
    argmin_ = refine_extremum(static_cast<double>(min_it - vals.begin()) / n, false);
    sup_ = value(argmax_);
    inf_ = value(argmin_);
    if (inf_ < -1e-12) {
      throw std::invalid_argument("tabulated potential must be nonnegative");
    }
    for (int i = 0; i < n; ++i) {
      const double prev = vals[(i + n - 1) % n];
      const double next = vals[(i + 1) % n];
      if (vals[i] >= prev && vals[i] > next) {
        critical_levels_.push_back(value(refine_extremum(static_cast<double>(i) / n, true)));
      }
    }
    std::sort(critical_levels_.begin(), critical_levels_.end());
  }

  PotentialKind kind_;
  double v0_ = 0.0;
  double sup_ = 0.0;
  double inf_ = 0.0;
  double argmax_ = 0.0;
  double argmin_ = 0.0;
  std::vector<double> critical_levels_;
  std::shared_ptr<const Table> table_;
};

/// Max |central difference - dV/dx| over an n-point grid.
inline double derivative_consistency_error(const Potential& v, int n = 1024,
                                           double step = 1e-5) {
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / n;
    const double fd = (v.value(x + step) - v.value(x - step)) / (2 * step);
    worst = std::max(worst, std::abs(fd - v.derivative(x)));
  }
  return worst;
}

/// Mass ratio, potential and the derived low-energy threshold l = 1 + 2 sup V.
struct ModelParams {
  double lambda;
  Potential potential;
  double l;

  ModelParams(double lambda_in, Potential potential_in)
      : lambda(lambda_in), potential(std::move(potential_in)), l(1.0 + 2.0 * potential.sup()) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      throw std::invalid_argument("mass ratio lambda must lie in [0, 1]");
    }
  }
};

inline double hamiltonian(const PhaseState& s, const Potential& v) noexcept {
  return 0.5 * s.p * s.p + v.value(s.x);
}

/// Collision rate density J_lambda(p, p') from momentum p to p'.
inline double jump_kernel(double lambda, double p, double p_new) noexcept {
  const double z = 0.5 * (1.0 - lambda) * p - 0.5 * (1.0 + lambda) * p_new;
  return (1.0 + lambda) * std::abs(p - p_new) * std::exp(-0.5 * z * z);
}

/// Levy density |q| exp(-q^2/8) of the lambda = 0 random walk.
inline double levy_density(double q) noexcept { return std::abs(q) * std::exp(-q * q / 8.0); }

/// Standard normal CDF.
inline double normal_cdf(double u) noexcept { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

/// Phi(hi) - Phi(lo) evaluated without cancellation in either tail.
inline double normal_cdf_diff(double lo, double hi) noexcept {
  if (lo >= 0.0) {
    return 0.5 * (std::erfc(lo / std::numbers::sqrt2) - std::erfc(hi / std::numbers::sqrt2));
  }
  if (hi <= 0.0) {
    return 0.5 * (std::erfc(-hi / std::numbers::sqrt2) - std::erfc(-lo / std::numbers::sqrt2));
  }
  return 1.0 - 0.5 * std::erfc(-lo / std::numbers::sqrt2) -
         0.5 * std::erfc(hi / std::numbers::sqrt2);
}

namespace detail {

/// Integral of |a - u| exp(-u^2/2) over [lo, hi].
inline double folded_gauss_integral(double a, double lo, double hi) noexcept {
  if (!(hi > lo)) {
    return 0.0;
  }
  // on u < a: (a - u) e^{-u^2/2}; antiderivative a sqrt(2pi) Phi(u) + e^{-u^2/2}
  auto piece = [a](double u1, double u2) {
    const double e1 = std::isfinite(u1) ? std::exp(-0.5 * u1 * u1) : 0.0;
    const double e2 = std::isfinite(u2) ? std::exp(-0.5 * u2 * u2) : 0.0;
    return a * kSqrt2Pi * normal_cdf_diff(u1, u2) + (e2 - e1);
  };
  double total = 0.0;
  if (lo < a) {
    total += piece(lo, std::min(hi, a));
  }
  if (hi > a) {
    total -= piece(std::max(lo, a), hi);
  }
  return std::max(total, 0.0);
}

}  // namespace detail

/// Total collision rate E_lambda(p) = integral of J_lambda(p, .) in closed form.
///
/// With a = lambda |p|: E = 4/(1+lambda) [2 e^{-a^2/2} + a sqrt(2 pi) erf(a/sqrt 2)].
inline double escape_rate(double lambda, double p) noexcept {
  const double a = lambda * std::abs(p);
  return 4.0 / (1.0 + lambda) *
         (2.0 * std::exp(-0.5 * a * a) + a * kSqrt2Pi * std::erf(a / std::numbers::sqrt2));
}

/// Integral of J_lambda(p, p') over p' in [lo, hi], closed form.
inline double jump_kernel_mass(double lambda, double p, double lo, double hi) noexcept {
  if (!(hi > lo)) {
    return 0.0;
  }
  const double a = lambda * p;
  auto to_u = [&](double q) { return 0.5 * ((1.0 + lambda) * q - (1.0 - lambda) * p); };
  const double ulo = std::isfinite(lo) ? to_u(lo) : -std::numeric_limits<double>::infinity();
  const double uhi = std::isfinite(hi) ? to_u(hi) : std::numeric_limits<double>::infinity();
  return 4.0 / (1.0 + lambda) * detail::folded_gauss_integral(a, ulo, uhi);
}

/// Adaptive quadrature of the escape rate; oracle for escape_rate().
///
/// Integrates over [m - 10 sigma, m + 10 sigma] around the Gaussian centre
/// m = (1-lambda) p/(1+lambda), sigma = 2/(1+lambda), splitting at the kink p' = p.
inline double escape_rate_quadrature(double lambda, double p, double tol) {
  if (!(tol > 0.0)) {
    throw std::invalid_argument("escape_rate_quadrature: tol must be positive");
  }
  const double m = (1.0 - lambda) * p / (1.0 + lambda);
  const double sigma = 2.0 / (1.0 + lambda);
  const double a = m - 10.0 * sigma;
  const double b = m + 10.0 * sigma;
  auto f = [&](double q) { return jump_kernel(lambda, p, q); };
  std::vector<double> cuts{a};
  if (p > a && p < b) {
    cuts.push_back(p);
  }
  if (m > a && m < b && std::abs(m - p) > 1e-12) {
    cuts.push_back(m);
  }
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    total += integrate_adaptive(f, cuts[i], cuts[i + 1], tol * 0.25, 1e-300);
  }
  return total;
}

/// Momentum regimes of the collision dynamics relative to 1/lambda.
enum class Regime { contractive, drift, random_walk };

inline const char* to_string(Regime r) noexcept {
  switch (r) {
    case Regime::contractive:
      return "contractive";
    case Regime::drift:
      return "drift";
    case Regime::random_walk:
      return "random_walk";
  }
  return "?";
}

inline Regime regime_classify(double lambda, double p, double multiplier = 4.0) {
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("regime_classify needs lambda in (0, 1]");
  }
  const double ap = std::abs(p);
  if (ap > multiplier / lambda) {
    return Regime::contractive;
  }
  if (ap < 1.0 / (lambda * multiplier)) {
    return Regime::random_walk;
  }
  return Regime::drift;
}

/// e^{-lambda p^2/2} J(p,p') - e^{-lambda p'^2/2} J(p',p); identically zero.
inline double detailed_balance_residual(double lambda, double p, double p_new) noexcept {
  return std::exp(-0.5 * lambda * p * p) * jump_kernel(lambda, p, p_new) -
         std::exp(-0.5 * lambda * p_new * p_new) * jump_kernel(lambda, p_new, p);
}

/// (1+lambda) e^{(lambda/4)(p^2 - p'^2)} J_0(p,p') - J_lambda(p,p'); nonnegative.
inline double db_inequality_margin(double lambda, double p, double p_new) noexcept {
  const double d = p - p_new;
  const double log_bound = 0.25 * lambda * (p * p - p_new * p_new) - d * d / 8.0;
  return (1.0 + lambda) * std::abs(d) * std::exp(log_bound) - jump_kernel(lambda, p, p_new);
}

/// Bounded nonnegative killing-rate function h on phase space.
class Modulator {
 public:
  using Fn = std::function<double(const PhaseState&, const ModelParams&)>;

  /// h(s) = 1 if H(s) <= level (inclusive), else 0.
  static Modulator energy_indicator(double level) {
    Modulator m;
    m.kind_ = Kind::energy_indicator;
    m.level_ = level;
    m.sup_ = 1.0;
    m.flow_invariant_ = true;
    m.witness_ = PhaseState(0.0, 0.0);
    return m;
  }

  /// The low-energy indicator at the model's threshold l.
  static Modulator low_energy(const ModelParams& params) {
    return energy_indicator(params.l);
  }

  static Modulator constant(double c) {
    if (!(c > 0.0)) {
      throw std::invalid_argument("constant modulator must be positive");
    }
    Modulator m;
    m.kind_ = Kind::custom;
    m.sup_ = c;
    m.flow_invariant_ = true;
    m.witness_ = PhaseState(0.0, 0.0);
    m.fn_ = [c](const PhaseState&, const ModelParams&) { return c; };
    return m;
  }

  /// Custom modulator. `flow_invariant` promises h is constant along the
  /// Hamiltonian flow (a function of energy only), which enables exact clocks.
  static Modulator custom(Fn fn, double sup, PhaseState witness, bool flow_invariant = false) {
    if (!(sup > 0.0)) {
      throw std::invalid_argument("custom modulator needs a positive declared bound");
    }
    Modulator m;
    m.kind_ = Kind::custom;
    m.fn_ = std::move(fn);
    m.sup_ = sup;
    m.witness_ = witness;
    m.flow_invariant_ = flow_invariant;
    return m;
  }

  double operator()(const PhaseState& s, const ModelParams& params) const {
    if (kind_ == Kind::energy_indicator) {
      return scale_ * (hamiltonian(s, params.potential) <= level_ ? 1.0 : 0.0);
    }
    return scale_ * fn_(s, params);
  }

  /// Declared bound on h.
  double sup() const noexcept { return scale_ * sup_; }
  bool flow_invariant() const noexcept { return flow_invariant_; }
  bool is_energy_indicator() const noexcept { return kind_ == Kind::energy_indicator; }
  double level() const noexcept { return level_; }
  double scale() const noexcept { return scale_; }
  const PhaseState& witness() const noexcept { return witness_; }

  Modulator scaled(double factor) const {
    if (!(factor > 0.0)) {
      throw std::invalid_argument("modulator scale must be positive");
    }
    Modulator m = *this;
    m.scale_ *= factor;
    return m;
  }

 private:
  enum class Kind { energy_indicator, custom };
  Modulator() = default;

  Kind kind_ = Kind::energy_indicator;
  double level_ = 0.0;
  double sup_ = 1.0;
  double scale_ = 1.0;
  bool flow_invariant_ = false;
  PhaseState witness_;
  Fn fn_;
};

/// Bounded nonnegative payoff f on phase space.
class Payoff {
 public:
  enum class Kind { indicator_band, energy_band, custom };
  using Fn = std::function<double(const PhaseState&, const ModelParams&)>;

  /// 1 if p_lo <= p <= p_hi.
  static Payoff indicator_band(double p_lo, double p_hi) {
    if (!(p_hi >= p_lo)) {
      throw std::invalid_argument("indicator band needs p_lo <= p_hi");
    }
    Payoff f;
    f.kind_ = Kind::indicator_band;
    f.lo_ = p_lo;
    f.hi_ = p_hi;
    f.sup_ = 1.0;
    return f;
  }

  /// 1 if H_lo <= H <= H_hi.
  static Payoff energy_band(double h_lo, double h_hi) {
    if (!(h_hi >= h_lo)) {
      throw std::invalid_argument("energy band needs H_lo <= H_hi");
    }
    Payoff f;
    f.kind_ = Kind::energy_band;
    f.lo_ = h_lo;
    f.hi_ = h_hi;
    f.sup_ = 1.0;
    return f;
  }

  static Payoff zero() {
    return custom([](const PhaseState&, const ModelParams&) { return 0.0; }, 0.0, true);
  }

  static Payoff constant(double c) {
    return custom([c](const PhaseState&, const ModelParams&) { return c; }, c, true);
  }

  /// Custom payoff with declared sup bound. `flow_invariant` as for Modulator.
  static Payoff custom(Fn fn, double sup, bool flow_invariant = false,
                       std::vector<double> momentum_breakpoints = {}) {
    if (!(sup >= 0.0)) {
      throw std::invalid_argument("payoff bound must be nonnegative");
    }
    Payoff f;
    f.kind_ = Kind::custom;
    f.fn_ = std::move(fn);
    f.sup_ = sup;
    f.flow_invariant_ = flow_invariant;
    f.breakpoints_ = std::move(momentum_breakpoints);
    return f;
  }

  double operator()(const PhaseState& s, const ModelParams& params) const {
    switch (kind_) {
      case Kind::indicator_band:
        return scale_ * (s.p >= lo_ && s.p <= hi_ ? 1.0 : 0.0);
      case Kind::energy_band: {
        const double h = hamiltonian(s, params.potential);
        return scale_ * (h >= lo_ && h <= hi_ ? 1.0 : 0.0);
      }
      case Kind::custom:
        return scale_ * fn_(s, params);
    }
    return 0.0;
  }

  Kind kind() const noexcept { return kind_; }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  double sup() const noexcept { return scale_ * sup_; }
  double scale() const noexcept { return scale_; }
  bool is_zero() const noexcept { return sup() == 0.0; }

  /// True when f is constant along the Hamiltonian flow.
  bool flow_invariant() const noexcept {
    return kind_ == Kind::energy_band || (kind_ == Kind::custom && flow_invariant_);
  }

  /// True when f depends on the momentum only.
  bool momentum_only() const noexcept { return kind_ == Kind::indicator_band; }

  /// Momentum values where f may jump (for grid alignment).
  std::vector<double> momentum_breakpoints() const {
    if (kind_ == Kind::indicator_band) {
      return {lo_, hi_};
    }
    return breakpoints_;
  }

  Payoff scaled(double factor) const {
    Payoff f = *this;
    f.scale_ *= factor;
    return f;
  }

  /// Pointwise sum (custom payoff; flow invariance kept if both are).
  friend Payoff operator+(const Payoff& a, const Payoff& b) {
    auto bp = a.momentum_breakpoints();
    const auto bb = b.momentum_breakpoints();
    bp.insert(bp.end(), bb.begin(), bb.end());
    return custom([a, b](const PhaseState& s, const ModelParams& m) { return a(s, m) + b(s, m); },
                  a.sup() + b.sup(), a.flow_invariant() && b.flow_invariant(), std::move(bp));
  }

 private:
  Payoff() = default;

  Kind kind_ = Kind::custom;
  double lo_ = 0.0;
  double hi_ = 0.0;
  double sup_ = 0.0;
  double scale_ = 1.0;
  bool flow_invariant_ = false;
  std::vector<double> breakpoints_;
  Fn fn_;
};

}  // namespace resolvent_lab
