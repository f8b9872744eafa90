#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "resolvent_lab/process.hpp"
#include "resolvent_lab/sampling.hpp"

using namespace resolvent_lab;

namespace {

// Kolmogorov-Smirnov distance of a sample against a CDF.
template <class Cdf>
double ks_distance(std::vector<double> xs, Cdf&& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double c = cdf(xs[i]);
    d = std::max({d, std::abs(c - i / n), std::abs((i + 1) / n - c)});
  }
  return d;
}

double quadrature_cdf(double lambda, double p, double q) {
  auto f = [&](double y) { return jump_kernel(lambda, p, y); };
  const double m = (1 - lambda) * p / (1 + lambda);
  const double lo = m - 12 * 2 / (1 + lambda);
  if (q <= lo) return 0.0;
  double acc = 0;
  double a = lo;
  if (p > lo && p < q) {
    acc += integrate_adaptive(f, lo, p, 1e-12, 1e-300);
    a = p;
  }
  acc += integrate_adaptive(f, a, q, 1e-12, 1e-300);
  return acc / escape_rate_quadrature(lambda, p, 1e-12);
}

}  // namespace

TEST(Substitution, DensityRatioIsConstant) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> lam(0, 1), mom(-50, 50), uu(-6, 6);
  for (int i = 0; i < 10000; ++i) {
    const double lambda = lam(gen), p = mom(gen), u = uu(gen);
    const double a = lambda * p;
    const double q = collision_p_from_u(lambda, p, u);
    EXPECT_NEAR(collision_u(lambda, p, q), u, 1e-12 * (1 + std::abs(p)));
    EXPECT_NEAR(p - q, 2 * (a - u) / (1 + lambda), 1e-12 * (1 + std::abs(p)));
    const double target = 2 * std::abs(a - u) * std::exp(-0.5 * u * u);
    if (target < 1e-200) continue;
    const double ratio = jump_kernel(lambda, p, q) * (2 / (1 + lambda)) / target;
    EXPECT_NEAR(ratio, 2 / (1 + lambda), 1e-10);
  }
}

TEST(PostCollision, ClosedFormCdfMatchesQuadrature) {
  for (auto [lambda, p] : {std::pair{0.0, 0.0}, {0.25, 8.0}, {0.5, 100.0}, {1.0, -3.0}}) {
    const double m = (1 - lambda) * p / (1 + lambda);
    for (int i = -10; i <= 10; ++i) {
      const double q = m + 0.6 * i;
      EXPECT_NEAR(post_collision_cdf(lambda, p, q), quadrature_cdf(lambda, p, q), 1e-10);
    }
  }
}

TEST(PostCollision, KolmogorovSmirnovAtMillionDraws) {
  for (auto [lambda, p] : {std::pair{0.0, 0.0}, {0.25, 8.0}, {0.5, 100.0}}) {
    RandomStream rng(2024, 1);
    std::vector<double> xs(1000000);
    for (double& x : xs) x = sample_post_collision(lambda, p, rng);
    const double d = ks_distance(xs, [&](double q) { return post_collision_cdf(lambda, p, q); });
    EXPECT_LE(d, 0.002) << lambda << " " << p;
  }
}

TEST(PostCollision, FlatIncrementsFollowLevyLaw) {
  // analytic CDF of j/8: F(q) = e^{-q^2/8}/2 for q < 0, 1 - e^{-q^2/8}/2 for q >= 0
  RandomStream rng(8, 8);
  std::vector<double> xs(200000);
  for (double& x : xs) x = sample_post_collision(0.0, 3.7, rng) - 3.7;
  const double d = ks_distance(xs, [](double q) {
    const double t = 0.5 * std::exp(-q * q / 8);
    return q < 0 ? t : 1 - t;
  });
  EXPECT_LE(d, 0.005);
}

TEST(PostCollision, ContractiveMeanMatchesQuadrature) {
  const double lambda = 0.5, p = 100;
  const double m = (1 - lambda) * p / (1 + lambda);
  auto f = [&](double q) { return q * jump_kernel(lambda, p, q); };
  const double mean =
      integrate_adaptive(f, m - 30, m + 30, 1e-12, 1e-300) / escape_rate(lambda, p);
  EXPECT_NEAR(mean, m, 0.5);
  RandomStream rng(77, 0);
  constexpr int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double q = sample_post_collision(lambda, p, rng);
    s += q;
    s2 += q * q;
  }
  const double avg = s / n;
  const double se = std::sqrt((s2 / n - avg * avg) / n);
  EXPECT_LE(std::abs(avg - mean), 3 * se);
}

TEST(PostCollision, EnvelopeEfficiency) {
  double worst = 1;
  for (double a = 0; a < 30; a += 0.01) {
    const double target = 2 * std::exp(-a * a / 2) + a * kSqrt2Pi * std::erf(a / std::sqrt(2.0));
    worst = std::min(worst, target / (a * kSqrt2Pi + 2));
  }
  EXPECT_GE(worst, 0.38);
}

TEST(PostCollision, DeterministicForEqualStreams) {
  RandomStream a(5, 9), b(5, 9);
  for (int i = 0; i < 10000; ++i) {
    ASSERT_EQ(sample_post_collision(0.3, 4.0, a), sample_post_collision(0.3, 4.0, b));
  }
}

TEST(Thinning, MajorantSitsAtPotentialMinimum) {
  const auto v = Potential::cosine(1.0);
  for (double lambda : {0.1, 0.25, 1.0}) {
    for (double energy : {0.5, 1.5, 8.0, 50.0}) {
      const auto [x, best] = shell_majorant_search(lambda, energy, v);
      EXPECT_NEAR(best, shell_majorant(lambda, energy, v), 1e-9 * best);
      EXPECT_LT(std::min(x, 1 - x), 1e-3);
    }
  }
  EXPECT_EQ(shell_majorant(0.3, 4.5, Potential::zero()), escape_rate(0.3, 3.0));
}

TEST(Thinning, ViolationIsFatal) {
  RandomStream rng(1, 1);
  EXPECT_THROW(accept_candidate(0.5, 10.0, escape_rate(0.5, 5.0), rng), MajorantViolation);
}

TEST(Thinning, FlatShellAcceptsEveryCandidate) {
  ModelParams m(0.25, Potential::zero());
  SimConfig cfg;
  RandomStream rng(3, 3);
  FullWalker w(m, cfg, rng, {0.0, 2.0});
  for (int i = 0; i < 2000; ++i) {
    const auto r = w.advance(INFINITY);
    ASSERT_EQ(r.kind, EventKind::collision);
  }
}

TEST(Thinning, AcceptanceMatchesOrbitAverage) {
  const double lambda = 0.25, energy = 8.0;
  ModelParams m(lambda, Potential::cosine(1.0));
  const double majorant = shell_majorant(lambda, energy, m.potential) * (1 + kMajorantSlack);
  const CurveState g{std::sqrt(2 * energy), 1};
  const double predicted =
      curve_quadrature(g, m, 2048).kappa_average([&](double, double p) {
        return escape_rate(lambda, p);
      }) / majorant;
  SimConfig cfg;
  RandomStream rng(4, 4);
  PhaseState s(0.0, 4.0);
  constexpr int n = 100000;
  int accepted = 0;
  for (int i = 0; i < n; ++i) {
    s = integrate_flow(s, rng.exponential() / majorant, m, cfg);
    accepted += accept_candidate(lambda, s.p, majorant, rng);
  }
  const double rate = static_cast<double>(accepted) / n;
  const double se = std::sqrt(predicted * (1 - predicted) / n);
  EXPECT_LE(std::abs(rate - predicted), 3 * se) << rate << " vs " << predicted;
}

TEST(CollisionTimes, ZeroMassRatioWaitsAreExponentialEight) {
  ModelParams m(0.0, Potential::cosine(1.0));
  RandomStream rng(6, 6);
  FwSampler sampler(m);
  std::vector<double> waits;
  waits.reserve(1000000);
  CurveState g{4.0, 1};
  for (int i = 0; i < 1000000; ++i) {
    auto j = sampler.jump(g, rng);
    waits.push_back(j.wait);
    if (j.exited || j.next.rho > 50) {
      g = {4.0, 1};
    } else {
      g = j.next;
    }
  }
  EXPECT_LE(ks_distance(waits, [](double t) { return 1 - std::exp(-8 * t); }), 0.002);
  // the full process as well, with fewer draws
  SimConfig cfg;
  RandomStream rng2(6, 7);
  std::vector<double> full;
  FullWalker w(m, cfg, rng2, {0.0, 0.0});
  double last = 0;
  while (full.size() < 5000) {
    const auto r = w.advance(INFINITY);
    if (r.kind == EventKind::collision) {
      full.push_back(w.time() - last);
      last = w.time();
    }
  }
  EXPECT_LE(ks_distance(full, [](double t) { return 1 - std::exp(-8 * t); }), 0.025);
}
