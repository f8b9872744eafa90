#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "resolvent_lab/parallel.hpp"
#include "resolvent_lab/process.hpp"
#include "stats_util.hpp"

using namespace resolvent_lab;

namespace {
const ModelParams kFlat(0.25, Potential::zero());
const ModelParams kCos(0.25, Potential::cosine(1.0));
}  // namespace

TEST(Flow, FreeMotionExamples) {
  SimConfig cfg;
  const auto a = integrate_flow({0.2, 3.0}, 0.5, kFlat, cfg);
  EXPECT_NEAR(a.x, 0.7, 1e-14);
  EXPECT_EQ(a.p, 3.0);
  const auto b = integrate_flow({0.9, 2.0}, 0.1, kFlat, cfg);
  EXPECT_NEAR(b.x, 0.1, 1e-14);
  EXPECT_EQ(b.p, 2.0);
  EXPECT_THROW(integrate_flow({0.0, 1.0}, -1.0, kFlat, cfg), std::invalid_argument);
}

TEST(Flow, ReturnsAfterOnePeriod) {
  SimConfig cfg;
  const double period = orbit_period({2.0, 1}, kCos);
  const auto s = integrate_flow({0.0, 2.0}, period, kCos, cfg);
  const double dx = std::min(s.x, 1 - s.x);
  EXPECT_LT(dx, 1e-6);
  EXPECT_NEAR(s.p, 2.0, 1e-6);
}

TEST(Flow, EnergyConservationAndReversibility) {
  SimConfig cfg;
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> ux(0, 1), up(-30, 30), ut(0, 5);
  for (int i = 0; i < 300; ++i) {
    const PhaseState s(ux(gen), up(gen));
    const double dt = ut(gen);
    const auto out = integrate_flow(s, dt, kCos, cfg);
    EXPECT_LE(std::abs(hamiltonian(out, kCos.potential) - hamiltonian(s, kCos.potential)),
              1e-9 * (1 + dt));
    const auto back = integrate_flow({out.x, -out.p}, dt, kCos, cfg);
    double dx = std::abs(back.x - s.x);
    dx = std::min(dx, 1 - dx);
    EXPECT_LT(dx, 1e-10);
    EXPECT_NEAR(-back.p, s.p, 1e-10 * (1 + std::abs(s.p)));
  }
}

TEST(SimulateFull, ZeroHorizonIsStartOnly) {
  SimConfig cfg;
  RandomStream rng(1, 1);
  const auto t = simulate_full({0.4, 1.0}, 0.0, kCos, cfg, rng);
  ASSERT_EQ(t.events.size(), 1u);
  EXPECT_EQ(t.events[0].after.x, 0.4);
  EXPECT_EQ(t.events[0].after.p, 1.0);
}

TEST(SimulateFull, CollisionsKeepPositionAndFlowKeepsEnergy) {
  SimConfig cfg;
  RandomStream rng(2, 2);
  const auto t = simulate_full({0.1, 1.0}, 50.0, kCos, cfg, rng);
  ASSERT_GT(t.events.size(), 50u);
  for (std::size_t i = 1; i < t.events.size(); ++i) {
    const auto& e = t.events[i];
    EXPECT_GT(e.time, t.events[i - 1].time);
    EXPECT_EQ(e.before.x, e.after.x);
    if (e.kind == EventKind::vacuous) {
      EXPECT_EQ(e.before.p, e.after.p);
    }
    const double h_prev = hamiltonian(t.events[i - 1].after, kCos.potential);
    const double h_now = hamiltonian(e.before, kCos.potential);
    EXPECT_NEAR(h_now, h_prev, 1e-9 * (1 + e.time - t.events[i - 1].time));
  }
}

TEST(SimulateFull, CollisionIncrementsFollowSamplerLaw) {
  SimConfig cfg;
  RandomStream rng(3, 3);
  const auto t = simulate_full({0.1, 5.0}, 3000.0, kCos, cfg, rng);
  std::vector<double> u;
  for (const auto& e : t.events) {
    if (e.kind == EventKind::collision) {
      u.push_back(post_collision_cdf(kCos.lambda, e.before.p, e.after.p));
    }
  }
  ASSERT_GT(u.size(), 10000u);
  const double d = testutil::ks_distance(u, [](double x) { return x; });
  EXPECT_LT(d, 1.63 / std::sqrt(double(u.size())));
}

TEST(SimulateFull, FlatMomentumMarginalIsStationaryGaussian) {
  SimConfig cfg;
  constexpr int n = 10000;
  std::vector<double> ps(n);
  parallel_for(n, default_workers(), [&](std::size_t i) {
    RandomStream rng(11, i);
    ps[i] = simulate_full_endpoint({0.0, 0.0}, 1000.0, kFlat, cfg, rng).p;
  });
  const auto [stat, crit] = testutil::gaussian_chi_square(ps, 2.0);
  EXPECT_LT(stat, crit);
}

TEST(SimulateFull, EnergyOccupationMatchesGibbsState) {
  // time-averaged H histogram versus e^{-lambda H} times the density of states;
  // bin probabilities from the x-integral of a closed-form Gaussian momentum mass
  const double lambda = kCos.lambda;
  const std::vector<double> edges{0, 0.5, 1, 1.5, 2.5, 3.5, 5, 7, 10, 14, 1e9};
  const std::size_t bins = edges.size() - 1;
  auto momentum_mass = [&](double x, double a, double b) {
    const double v = kCos.potential.value(x);
    const double lo = std::sqrt(2 * std::max(a - v, 0.0));
    const double hi = std::sqrt(2 * std::max(b - v, 0.0));
    return std::exp(-lambda * v) * 2 * normal_cdf_diff(std::sqrt(lambda) * lo,
                                                       std::sqrt(lambda) * hi);
  };
  std::vector<double> expected(bins);
  double total = 0;
  for (std::size_t k = 0; k < bins; ++k) {
    // split where V(x) = edge; V = (1 - cos 2 pi x)/2 on [0, 1/2] is invertible
    std::vector<double> cuts{0.0, 0.5};
    for (double c : {edges[k], edges[k + 1]}) {
      if (c > 0 && c < 1) cuts.push_back(std::acos(1 - 2 * c) / (2 * std::numbers::pi));
    }
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
      // the cosine potential is symmetric about 1/2
      expected[k] += 2 * integrate_adaptive(
                             [&](double x) { return momentum_mass(x, edges[k], edges[k + 1]); },
                             cuts[j], cuts[j + 1], 1e-6, 1e-10);
    }
    total += expected[k];
  }
  for (double& e : expected) e /= total;

  SimConfig cfg;
  constexpr int paths = 1000;
  const double burn = 30, horizon = 130;
  std::vector<std::vector<double>> frac(paths, std::vector<double>(bins, 0.0));
  parallel_for(paths, default_workers(), [&](std::size_t i) {
    RandomStream rng(12, i);
    FullWalker w(kCos, cfg, rng, {0.0, 0.0});
    while (w.time() < burn) w.advance(burn - w.time());
    while (w.time() < horizon) {
      w.advance(horizon - w.time(), [&](const PhaseState& a, const PhaseState&, double dt) {
        const double h = hamiltonian(a, kCos.potential);
        const auto k = std::upper_bound(edges.begin(), edges.end(), h) - edges.begin() - 1;
        frac[i][k] += dt / (horizon - burn);
      });
    }
  });
  for (std::size_t k = 0; k < bins; ++k) {
    double m = 0, m2 = 0;
    for (const auto& f : frac) {
      m += f[k];
      m2 += f[k] * f[k];
    }
    m /= paths;
    const double se = std::sqrt((m2 / paths - m * m) / paths);
    EXPECT_LE(std::abs(m - expected[k]), 3 * se) << "bin " << k << " " << m << " vs " << expected[k];
  }
}

TEST(SimulateFull, CosineMomentumMarginalIsGaussian) {
  SimConfig cfg;
  constexpr int n = 4000;
  std::vector<double> ps(n);
  parallel_for(n, default_workers(), [&](std::size_t i) {
    RandomStream rng(13, i);
    ps[i] = simulate_full_endpoint({0.0, 0.0}, 60.0, kCos, cfg, rng).p;
  });
  const auto [stat, crit] = testutil::gaussian_chi_square(ps, 2.0);
  EXPECT_LT(stat, crit);
}

TEST(MomentumOnly, WaitsAndStationarity) {
  RandomStream rng(5, 0);
  const auto t = simulate_momentum_only(0.0, 20000.0, 0.0, rng);
  std::vector<double> waits;
  for (std::size_t i = 1; i + 1 < t.events.size(); ++i) {
    waits.push_back(t.events[i].time - t.events[i - 1].time);
  }
  ASSERT_GT(waits.size(), 100000u);
  EXPECT_LT(testutil::ks_distance(waits, [](double x) { return 1 - std::exp(-8 * x); }),
            1.63 / std::sqrt(double(waits.size())));
  constexpr int n = 10000;
  std::vector<double> ps(n);
  for (int i = 0; i < n; ++i) {
    RandomStream r(6, i);
    ps[i] = simulate_momentum_only(0.0, 200.0, 0.25, r).events.back().after.p;
  }
  const auto [stat, crit] = testutil::gaussian_chi_square(ps, 2.0);
  EXPECT_LT(stat, crit);
}

TEST(MomentumOnly, DescentTimeGrowsLogarithmically) {
  const double lambda = 0.5;
  std::vector<double> ratios;
  for (double p0 : {50.0, 100.0, 200.0, 400.0}) {
    double total = 0;
    constexpr int paths = 4000;
    for (int i = 0; i < paths; ++i) {
      RandomStream rng(7, i + static_cast<int>(p0) * 100000);
      double p = p0;
      int jumps = 0;
      while (std::abs(p) >= 1 / lambda) {
        p = sample_post_collision(lambda, p, rng);
        ++jumps;
      }
      total += jumps;
    }
    ratios.push_back(total / paths / (std::log(1 + lambda * p0) / lambda));
  }
  const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
  EXPECT_LE(*hi / *lo, 2.0);
}

TEST(SimulateFw, FlatMatchesMomentumProcessThroughLabels) {
  ModelParams m(0.25, Potential::zero());
  constexpr int n = 100000;
  std::vector<double> fw(n), mo(n);
  for (int i = 0; i < n; ++i) {
    RandomStream a(8, i), b(9, i);
    const auto t = simulate_fw({3.0, 1}, 1.5, m, a);
    const auto& g = t.events.back().state;
    fw[i] = g.eps * g.rho;
    mo[i] = simulate_momentum_only(3.0, 1.5, 0.25, b).events.back().after.p;
  }
  EXPECT_LT(testutil::ks_two_sample(fw, mo), 1.63 * std::sqrt(2.0 / n));
}

TEST(SimulateFw, JumpLawMatchesBinRates) {
  const CurveState g{4.0, 1};
  const double esc = fw_escape_rate(0.25, g, kCos);
  FwSampler sampler(kCos);
  RandomStream rng(10, 0);
  constexpr int n = 100000;
  std::vector<double> edges{std::sqrt(2.0), 2, 3, 3.5, 4, 4.5, 5, 6, 8};
  std::vector<double> counts(2 * edges.size() + 1, 0.0);
  double wait_sum = 0;
  for (int i = 0; i < n; ++i) {
    const auto j = sampler.jump(g, rng);
    wait_sum += j.wait;
    if (j.exited) {
      counts.back() += 1;
      continue;
    }
    const int side = j.next.eps > 0 ? 0 : 1;
    int k = static_cast<int>(std::upper_bound(edges.begin(), edges.end(), j.next.rho) -
                             edges.begin()) - 1;
    counts[side * edges.size() + k] += 1;
  }
  double chi = 0;
  int cells = 0;
  for (int side = 0; side < 2; ++side) {
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const double hi = k + 1 < edges.size() ? edges[k + 1] : INFINITY;
      const double expected = n * fw_bin_rate(0.25, g, side ? -1 : 1, edges[k], hi, kCos) / esc;
      const double c = counts[side * edges.size() + k];
      if (expected > 5) {
        chi += (c - expected) * (c - expected) / expected;
        ++cells;
      }
    }
  }
  const double expected_exit = n * fw_exit_rate(0.25, g, kCos) / esc;
  chi += (counts.back() - expected_exit) * (counts.back() - expected_exit) / expected_exit;
  boost::math::chi_squared_distribution<double> dist(cells);
  EXPECT_LT(chi, boost::math::quantile(boost::math::complement(dist, 0.01)));
  const double mean_wait = wait_sum / n;
  EXPECT_NEAR(mean_wait, 1 / esc, 4 / esc / std::sqrt(double(n)));
}
