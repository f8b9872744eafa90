#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "resolvent_lab/resolvent_grid.hpp"
#include "resolvent_lab/resolvent_mc.hpp"

using namespace resolvent_lab;

namespace {

const Estimator kAll[] = {Estimator::killing, Estimator::exp_weight, Estimator::chain_weights,
                          Estimator::chain_coins};

ResolventQuery band_query(const ModelParams& m, double p, Estimator e, long n, std::uint64_t seed) {
  ResolventQuery q;
  q.start = PhaseState(0.0, p);
  q.h = Modulator::low_energy(m);
  q.f = Payoff::indicator_band(1, 3);
  q.estimator = e;
  q.n = n;
  q.seed = seed;
  return q;
}

}  // namespace

TEST(Summary, BatchMeansOfIidValues) {
  std::vector<double> v(6400);
  RandomStream rng(1, 0);
  for (double& x : v) x = rng.normal();
  const Estimate e = summarize(v);
  EXPECT_NEAR(e.mean, 0.0, 4.0 / 80.0);
  EXPECT_NEAR(e.std_err, 1.0 / 80.0, 0.35 / 80.0);
  EXPECT_EQ(e.n, 6400);
  const Estimate tiny = summarize({2.0, 4.0});
  EXPECT_DOUBLE_EQ(tiny.mean, 3.0);
  EXPECT_DOUBLE_EQ(tiny.std_err, 1.0);
}

TEST(Estimators, ZeroPayoffGivesZero) {
  for (const auto& m : {ModelParams(0.25, Potential::zero()), ModelParams(0.25, Potential::cosine(1))}) {
    for (Estimator e : kAll) {
      ResolventQuery q = band_query(m, 2.0, e, 200, 3);
      q.f = Payoff::zero();
      EXPECT_EQ(estimate_resolvent(q, m).mean, 0.0);
    }
  }
}

TEST(Estimators, ConstantModulatorCalibration) {
  const ModelParams m(0.25, Potential::cosine(1.0));
  const double hh = 2.5;
  for (Estimator e : kAll) {
    ResolventQuery q = band_query(m, 2.0, e, 4000, 11);
    q.h = Modulator::constant(hh);
    q.f = Payoff::constant(1.0);
    const Estimate est = estimate_resolvent(q, m);
    if (e == Estimator::chain_weights || e == Estimator::chain_coins) {
      EXPECT_NEAR(est.mean, 1.0 / hh, 1e-12) << to_string(e);  // one term per path
    } else if (e == Estimator::exp_weight) {
      EXPECT_NEAR(est.mean, 1.0 / hh, 1e-10);
    } else {
      EXPECT_LE(std::abs(est.mean - 1.0 / hh), 3 * est.std_err);
    }
  }
  // a custom (non flow-invariant) modulator takes the thinning path
  ResolventQuery q = band_query(m, 2.0, Estimator::killing, 4000, 12);
  q.h = Modulator::custom([hh](const PhaseState&, const ModelParams&) { return hh; }, hh,
                          PhaseState(0, 0));
  q.f = Payoff::constant(1.0);
  const Estimate est = estimate_killing(q, m);
  EXPECT_LE(std::abs(est.mean - 1.0 / hh), 3 * est.std_err);
}

TEST(Estimators, FlatPotentialMatchesNystrom) {
  for (double lambda : {0.5, 0.25}) {
    const ModelParams m(lambda, Potential::zero());
    const auto h = Modulator::low_energy(m);
    const auto f = Payoff::indicator_band(1, 3);
    const auto sol = solve_momentum_resolvent(lambda, momentum_view(h, m), momentum_view(f, m),
                                              make_momentum_grid_for(lambda,
                                                                     momentum_breakpoints(h, f)));
    for (double p : {0.0, 2.0, 6.0}) {
      const Estimate est = estimate_killing(band_query(m, p, Estimator::killing, 20000, 21), m);
      const double exact = sol(p);
      EXPECT_LE(std::abs(est.mean - exact), std::max(3 * est.std_err, 0.02 * exact))
          << lambda << " " << p;
    }
  }
}

TEST(Estimators, RepresentationsAgreePairwise) {
  for (const Potential& v : {Potential::zero(), Potential::cosine(1.0)}) {
    for (double lambda : {0.5, 0.25}) {
      const ModelParams m(lambda, v);
      for (double p : {0.0, 2.0, 6.0}) {
        std::vector<Estimate> est;
        std::uint64_t seed = 100;
        for (Estimator e : kAll) {
          est.push_back(estimate_resolvent(band_query(m, p, e, 8000, seed++), m));
        }
        for (std::size_t a = 0; a < est.size(); ++a) {
          for (std::size_t b = a + 1; b < est.size(); ++b) {
            const double se = std::hypot(est[a].std_err, est[b].std_err);
            EXPECT_LE(std::abs(est[a].mean - est[b].mean), 3 * se)
                << to_string(kAll[a]) << " vs " << to_string(kAll[b]) << " lambda " << lambda
                << " p " << p << " V " << (v.is_zero() ? "zero" : "cosine");
          }
        }
      }
    }
  }
}

TEST(Estimators, MonotoneInModulator) {
  // paired seeds: doubling h can only shorten the killing time
  const ModelParams m(0.25, Potential::cosine(1.0));
  int violations = 0;
  for (int k = 0; k < 50; ++k) {
    const double p = -6.0 + 12.0 * k / 49.0;
    ResolventQuery q = band_query(m, p, Estimator::killing, 400, 500 + k);
    const Estimate one = estimate_killing(q, m);
    q.h = q.h.scaled(2.0);
    const Estimate two = estimate_killing(q, m);
    if (two.mean > one.mean + 3 * std::hypot(one.std_err, two.std_err)) ++violations;
  }
  EXPECT_LE(violations, 2);
}

TEST(Estimators, LinearInPayoff) {
  const ModelParams m(0.25, Potential::cosine(1.0));
  const Payoff f1 = Payoff::indicator_band(1, 3);
  const Payoff f2 = Payoff::energy_band(0, 2);
  for (Estimator e : kAll) {
    ResolventQuery q = band_query(m, 2.0, e, 1000, 42);
    q.f = f1;
    const double a = estimate_resolvent(q, m).mean;
    q.f = f2;
    const double b = estimate_resolvent(q, m).mean;
    q.f = f1 + f2;
    const Estimate sum = estimate_resolvent(q, m);
    EXPECT_LE(std::abs(sum.mean - a - b), 3 * sum.std_err) << to_string(e);
  }
}

TEST(Estimators, DeterministicAcrossWorkerCounts) {
  const ModelParams m(0.25, Potential::cosine(1.0));
  for (Estimator e : kAll) {
    ResolventQuery q = band_query(m, 2.0, e, 300, 9);
    q.workers = 1;
    const Estimate a = estimate_resolvent(q, m);
    q.workers = 4;
    const Estimate b = estimate_resolvent(q, m);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.std_err, b.std_err);
  }
}

TEST(Estimators, CapsSetTheTruncationFlag) {
  const ModelParams m(0.25, Potential::zero());
  ResolventQuery q = band_query(m, 40.0, Estimator::killing, 50, 5);
  q.caps.event_cap = 3;
  const Estimate est = estimate_killing(q, m);
  EXPECT_TRUE(est.biased);
  EXPECT_EQ(est.truncated_paths, 50);
}

TEST(FwEstimator, FlatReducesToKilling) {
  const double lambda = 0.25;
  const ModelParams m(lambda, Potential::zero());
  FwQuery q;
  q.start = CurveState{2.0, 1};
  q.f = [](const CurveState& g) { return g.rho >= 1 && g.rho <= 3 ? 1.0 : 0.0; };
  q.n = 20000;
  q.seed = 31;
  const Estimate fw = estimate_fw_resolvent(q, m);
  ResolventQuery k = band_query(m, 2.0, Estimator::killing, 20000, 32);
  k.f = Payoff::custom(
      [](const PhaseState& s, const ModelParams&) { return std::abs(s.p) >= 1 && std::abs(s.p) <= 3; },
      1.0, false, {-3, -1, 1, 3});
  const Estimate full = estimate_killing(k, m);
  EXPECT_LE(std::abs(fw.mean - full.mean), 3 * std::hypot(fw.std_err, full.std_err));
  EXPECT_FALSE(fw.biased);
  q.f = [](const CurveState&) { return 0.0; };
  EXPECT_EQ(estimate_fw_resolvent(q, m).mean, 0.0);
}

TEST(FwEstimator, MatchesFwNystromWithPotential) {
  const double lambda = 0.25;
  const ModelParams m(lambda, Potential::cosine(1.0));
  const auto f = [](const CurveState& g) { return g.rho >= 3 && g.rho <= 5 ? 1.0 : 0.0; };
  const auto grid = make_fw_grid(m, default_p_max(lambda), 0.05, 1.0, 8,
                                 {3.0, 5.0, std::sqrt(2 * m.l)});
  const auto sol = solve_fw_resolvent(lambda, fw_default_modulator(m), f, grid, m);
  int checked = 0;
  for (std::size_t k = 0; k < grid.size() && checked < 6; ++k) {
    const CurveState g = grid.state(k);
    const bool wanted = (g.rho > 2.6 && g.rho < 2.9) || (g.rho > 4.0 && g.rho < 4.3) ||
                        (g.rho > 7.0 && g.rho < 7.4);
    if (!wanted) continue;
    FwQuery q;
    q.start = g;
    q.f = f;
    q.n = 20000;
    q.seed = 40 + k;
    q.exit_rho = grid.r_min;
    const Estimate est = estimate_fw_resolvent(q, m);
    EXPECT_LE(std::abs(est.mean - sol.at(k)), 3 * est.std_err)
        << "rho " << g.rho << " eps " << g.eps;
    ++checked;
  }
  EXPECT_EQ(checked, 6);
}

TEST(HatEstimator, FlatPotentialHasNoPositionDependence) {
  const ModelParams m(0.25, Potential::zero());
  const ResolventQuery q = band_query(m, 2.0, Estimator::killing, 20000, 51);
  const Estimate hat = estimate_hat_resolvent(CurveState{2.0, 1}, q, m);
  ResolventQuery shifted = q;
  shifted.start = PhaseState(0.37, 2.0);
  shifted.seed = 52;
  const Estimate point = estimate_killing(shifted, m);
  EXPECT_LE(std::abs(hat.mean - point.mean), 3 * std::hypot(hat.std_err, point.std_err));
  ResolventQuery zero = q;
  zero.f = Payoff::zero();
  EXPECT_EQ(estimate_hat_resolvent(CurveState{2.0, 1}, zero, m).mean, 0.0);
}
