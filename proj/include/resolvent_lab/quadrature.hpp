#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace resolvent_lab {

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gauss-Legendre rule on [-1, 1].
struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

inline GaussLegendreRule compute_gauss_legendre(int n) {
  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) {
        break;
      }
    }
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

}  // namespace detail

/// Cached n-point Gauss-Legendre rule.
inline const GaussLegendreRule& gauss_legendre(int n) {
  static std::mutex mutex;
  static std::map<int, GaussLegendreRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) {
    it = cache.emplace(n, detail::compute_gauss_legendre(n)).first;
  }
  return it->second;
}

/// Nodes and weights of a composite quadrature rule.
struct QuadratureNodes {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const noexcept { return nodes.size(); }

  template <class F>
  double integrate(F&& f) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      sum += weights[i] * f(nodes[i]);
    }
    return sum;
  }
};

/// Composite Gauss-Legendre panels on [a, b].
///
/// Panel boundaries include every breakpoint strictly inside (a, b); each
/// piece is then split evenly so no panel is wider than `max_width`.
inline QuadratureNodes gauss_legendre_panels(double a, double b, double max_width,
                                             int points_per_panel,
                                             std::vector<double> breakpoints = {}) {
  if (!(b > a) || !(max_width > 0.0) || points_per_panel < 1) {
    throw std::invalid_argument("gauss_legendre_panels: bad interval or panel size");
  }
  std::vector<double> edges{a, b};
  for (double bp : breakpoints) {
    if (bp > a && bp < b) {
      edges.push_back(bp);
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [](double u, double v) { return std::abs(u - v) < 1e-14; }),
              edges.end());
  const auto& rule = gauss_legendre(points_per_panel);
  QuadratureNodes out;
  for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
    const double lo = edges[e];
    const double hi = edges[e + 1];
    const int pieces = std::max(1, static_cast<int>(std::ceil((hi - lo) / max_width - 1e-12)));
    const double width = (hi - lo) / pieces;
    for (int k = 0; k < pieces; ++k) {
      const double c = lo + (k + 0.5) * width;
      for (int i = 0; i < points_per_panel; ++i) {
        out.nodes.push_back(c + 0.5 * width * rule.nodes[i]);
        out.weights.push_back(0.5 * width * rule.weights[i]);
      }
    }
  }
  return out;
}

/// Adaptive Gauss-Kronrod integration with a relative tolerance.
///
/// Throws QuadratureError when the error estimate does not reach
/// `rel_tol * |result|` (plus `abs_floor`) within the refinement limit.
template <class F>
double integrate_adaptive(F&& f, double a, double b, double rel_tol, double abs_floor = 0.0,
                          unsigned max_depth = 15) {
  if (a == b) {
    return 0.0;
  }
  // integrate on [-1, 1] so the Kronrod error estimate is in the units of the result
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  auto g = [&](double t) { return half * f(mid + half * t); };
  double err = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      g, -1.0, 1.0, max_depth, std::max(rel_tol * 0.1, 1e-15), &err);
  if (!(err <= rel_tol * std::abs(value) + abs_floor) || !std::isfinite(value)) {
    std::ostringstream msg;
    msg << std::setprecision(6) << "adaptive quadrature did not converge on [" << a << ", " << b
        << "], value " << value << ", error estimate " << err;
    throw QuadratureError(msg.str());
  }
  return value;
}

}  // namespace resolvent_lab
