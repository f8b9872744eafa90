#pragma once

#include <cmath>
#include <stdexcept>
#include <limits>
#include <string>
#include <utility>

#include "resolvent_lab/model.hpp"
#include "resolvent_lab/rng.hpp"

namespace resolvent_lab {

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Majorant rate was below the true collision rate at a candidate.
class MajorantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline constexpr long kRejectionCap = 1000000;

/// Relative headroom on a numerically integrated shell. The flow conserves H
/// only to the integrator tolerance, so the rate along a path can sit a hair
/// above the exact shell maximum.
inline constexpr double kMajorantSlack = 1e-6;

/// Draw u from the density proportional to |a - u| exp(-u^2/2).
///
/// Envelope (|a| + |u|) exp(-u^2/2): a Gaussian component of mass |a| sqrt(2 pi)
/// and a two-sided Rayleigh component of mass 2.
inline double sample_folded_gaussian(double a, RandomStream& rng) {
  const double abs_a = std::abs(a);
  const double gauss_mass = abs_a * kSqrt2Pi;
  const double total = gauss_mass + 2.0;
  for (long iter = 0; iter < kRejectionCap; ++iter) {
    double u = 0.0;
    if (rng.uniform() * total < gauss_mass) {
      u = rng.normal();
    } else {
      u = rng.sign() * std::sqrt(2.0 * rng.exponential());
    }
    const double bound = abs_a + std::abs(u);
    const double target = std::abs(a - u);
    if (target > bound) {
      throw SamplerError("envelope violated in collision sampler");
    }
    if (rng.uniform() * bound < target) {
      return u;
    }
  }
  throw SamplerError("collision sampler exceeded its iteration cap");
}

/// Post-collision momentum with density J_lambda(p, .) / E_lambda(p).
inline double sample_post_collision(double lambda, double p, RandomStream& rng) {
  const double u = sample_folded_gaussian(lambda * p, rng);
  return (2.0 * u + (1.0 - lambda) * p) / (1.0 + lambda);
}

/// Collision-kernel coordinates: u = ((1+lambda) p' - (1-lambda) p) / 2.
inline double collision_u(double lambda, double p, double p_new) noexcept {
  return 0.5 * ((1.0 + lambda) * p_new - (1.0 - lambda) * p);
}

inline double collision_p_from_u(double lambda, double p, double u) noexcept {
  return (2.0 * u + (1.0 - lambda) * p) / (1.0 + lambda);
}

/// CDF of the post-collision law at q (closed-form kernel mass over E).
inline double post_collision_cdf(double lambda, double p, double q) noexcept {
  return jump_kernel_mass(lambda, p, -std::numeric_limits<double>::infinity(), q) /
         escape_rate(lambda, p);
}

/// Constant thinning rate on the energy shell H: the largest collision rate
/// reachable along the shell, attained where the momentum is largest.
inline double shell_majorant(double lambda, double energy, const Potential& v) {
  const double kinetic = std::max(energy - v.inf(), 0.0);
  return escape_rate(lambda, std::sqrt(2.0 * kinetic));
}

/// Golden-section search of max over x of E_lambda(sqrt(2H - 2V(x))) on the
/// shell, independent of shell_majorant; returns (maximiser, maximum).
inline std::pair<double, double> shell_majorant_search(double lambda, double energy,
                                                       const Potential& v) {
  auto rate = [&](double x) {
    return escape_rate(lambda, std::sqrt(std::max(2.0 * (energy - v.value(x)), 0.0)));
  };
  constexpr int scan = 512;
  int best = 0;
  double best_val = -1.0;
  for (int i = 0; i < scan; ++i) {
    const double r = rate(static_cast<double>(i) / scan);
    if (r > best_val) {
      best_val = r;
      best = i;
    }
  }
  constexpr double g = 0.6180339887498949;
  double a = (best - 1.0) / scan;
  double b = (best + 1.0) / scan;
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  for (int i = 0; i < 60; ++i) {
    if (rate(c) > rate(d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - g * (b - a);
    d = a + g * (b - a);
  }
  const double x = wrap_unit(0.5 * (a + b));
  return {x, std::max(best_val, rate(x))};
}

/// Thinning acceptance: true collision with probability E(p)/majorant.
inline bool accept_candidate(double lambda, double p, double majorant, RandomStream& rng) {
  const double rate = escape_rate(lambda, p);
  if (rate > majorant * (1.0 + 1e-12)) {
    throw MajorantViolation("collision rate " + std::to_string(rate) + " exceeds majorant " +
                            std::to_string(majorant));
  }
  return rng.uniform() * majorant < rate;
}

}  // namespace resolvent_lab
