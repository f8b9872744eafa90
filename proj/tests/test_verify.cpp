#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "resolvent_lab/verify.hpp"

using namespace resolvent_lab;

namespace {

// brute-force oracles for the right side of the main bound
double sup_A_brute(double lambda, double p, const BandPayoff& f, const Potential& v,
                   KernelA which) {
  double best = 0.0;
  const ModelParams m(lambda, v);
  const Payoff pay = f.payoff();
  for (int ix = 0; ix < 64; ++ix) {
    const double x = ix / 64.0;
    for (int k = -40000; k <= 40000; ++k) {
      const double q = k * 1e-3;
      if (pay(PhaseState(x, q), m) > 0.0) {
        best = std::max(best, which == KernelA::standard ? kernel_A(lambda, p, q)
                                                         : kernel_A_prime(lambda, p, q));
      }
    }
    if (v.is_zero()) {
      break;
    }
  }
  return best;
}

double int_B_brute(double lambda, double p, const BandPayoff& f, const Potential& v,
                   KernelB which) {
  const ModelParams m(lambda, v);
  const Payoff pay = f.payoff();
  auto kern = [&](double q) {
    return which == KernelB::first_argument ? kernel_B(lambda, p, q)
                                            : kernel_B_second(lambda, p, q);
  };
  auto slice = [&](double x) {
    double acc = 0.0;
    const double h = 1e-3;
    for (int k = -40000; k < 40000; ++k) {
      const double q = (k + 0.5) * h;
      acc += h * kern(q) * pay(PhaseState(x, q), m);
    }
    return acc;
  };
  if (v.is_zero()) {
    return slice(0.0);
  }
  double acc = 0.0;
  const int nx = 200;
  for (int i = 0; i < nx; ++i) {
    acc += slice((i + 0.5) / nx) / nx;
  }
  return acc;
}

}  // namespace

TEST(Kernels, Examples) {
  EXPECT_DOUBLE_EQ(kernel_A(0.1, 5.0, 20.0), 6.0);
  EXPECT_DOUBLE_EQ(kernel_B(0.1, 5.0, 3.0), 4.0);
  EXPECT_DOUBLE_EQ(kernel_A(0.3, 50.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(kernel_A(0.1, 50.0, -10.0), 11.0);  // indicator closed at 1/lambda
  EXPECT_DOUBLE_EQ(kernel_B(0.1, 11.0, 3.0), 0.0);
  EXPECT_DOUBLE_EQ(kernel_B_second(0.1, 11.0, 3.0), 4.0);
  EXPECT_DOUBLE_EQ(kernel_B_second(0.1, 5.0, 11.0), 0.0);
  // log(1 + 0.1 * 50)/0.1 = 17.9..., capped by |p| = 50 only when smaller
  EXPECT_NEAR(kernel_A_prime(0.1, 50.0, 20.0), (1.0 + std::log(6.0) / 0.1) / 3.0, 1e-14);
  EXPECT_NEAR(kernel_A_prime(0.1, 5.0, 3.0), 1.0 / 1.3, 1e-15);
}

TEST(TheoremRhs, ClosedFormsMatchBruteForce) {
  for (const Potential& v : {Potential::zero(), Potential::cosine(1.0)}) {
    for (double lambda : {0.5, 0.125}) {
      const ModelParams m(lambda, v);
      for (const BandPayoff& f : standard_payoffs(lambda, m)) {
        for (double p : {0.0, 2.0, -0.5 / lambda, 2.0 / lambda}) {
          for (KernelA a : {KernelA::standard, KernelA::prime}) {
            EXPECT_NEAR(sup_A_times_f(lambda, p, f, v, a), sup_A_brute(lambda, p, f, v, a),
                        2e-3)
                << f.label() << " p " << p;
          }
          for (KernelB b : {KernelB::first_argument, KernelB::second_argument}) {
            const double exact = integral_B_times_f(lambda, p, f, v, b);
            EXPECT_NEAR(exact, int_B_brute(lambda, p, f, v, b), 2e-3 * (1.0 + exact))
                << f.label() << " p " << p;
          }
        }
      }
    }
  }
}

TEST(TheoremRhs, PositiveOnEveryProbe) {
  // B >= 1 on |p| <= 1/lambda, and A >= 1 everywhere f is nonzero
  for (double lambda : {0.5, 0.25, 0.125, 0.0625}) {
    const ModelParams m(lambda, Potential::zero());
    for (const BandPayoff& f : standard_payoffs(lambda, m)) {
      for (double p : momentum_probes(lambda, true)) {
        EXPECT_GT(theorem_rhs(lambda, p, f, m.potential, KernelA::prime, KernelB::first_argument),
                  0.0);
      }
    }
  }
}

TEST(TheoremCheck, FlatPotentialExampleAndStructure) {
  TheoremCheckConfig cfg;
  cfg.lambdas = {0.25, 0.125};
  const auto reports = check_theorem_bound(cfg);
  ASSERT_EQ(reports.size(), 4u);
  for (const auto& r : reports) {
    ASSERT_EQ(r.c_hat.size(), 2u);
    ASSERT_EQ(r.ratios.size(), 1u);
    for (double c : r.c_hat) {
      EXPECT_TRUE(std::isfinite(c));
      EXPECT_GT(c, 0.0);
    }
    for (const auto& p : r.probes) {
      EXPECT_GE(p.lhs, -1e-10);
      EXPECT_GT(p.rhs, 0.0);
      EXPECT_LE(p.lhs / p.rhs, r.c_hat[p.lambda == 0.25 ? 0 : 1] + 1e-12);
    }
  }
  // the (lambda = 1/4, f = 1[1,3], p = 2) probe
  bool found = false;
  for (const auto& p : reports[0].probes) {
    if (p.lambda == 0.25 && p.p == 2.0 && p.payoff == "p[1,3]") {
      found = true;
      EXPECT_GT(p.lhs, 0.0);
      EXPECT_NEAR(p.rhs, theorem_rhs(0.25, 2.0, BandPayoff::momentum(1, 3), Potential::zero(),
                                     KernelA::standard, KernelB::first_argument),
                  1e-14);
    }
  }
  EXPECT_TRUE(found);
}

TEST(Drift, FullDriftMatchesAdaptiveQuadrature) {
  const Potential v = Potential::cosine(1.0);
  for (double lambda : {0.25, 0.125}) {
    for (PhaseState s : {PhaseState(0.0, 8.0), PhaseState(0.5, -16.0), PhaseState(0.25, 2.5 / lambda)}) {
      const double w0 = lyapunov_full(hamiltonian(s, v));
      const double vx = v.value(s.x);
      auto integrand = [&](double q) {
        return jump_kernel(lambda, s.p, q) * (w0 - lyapunov_full(0.5 * q * q + vx));
      };
      const double m = (1.0 - lambda) * s.p / (1.0 + lambda);
      const double sd = 2.0 / (1.0 + lambda);
      std::vector<double> cuts = {m - 16 * sd, 0.0, s.p, m + 16 * sd + std::abs(s.p)};
      std::sort(cuts.begin(), cuts.end());
      double oracle = 0.0;
      for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        oracle += integrate_adaptive(integrand, cuts[i], cuts[i + 1], 1e-8, 1e-12);
      }
      EXPECT_NEAR(drift_full(lambda, s, v), oracle, 1e-7 * std::abs(oracle) + 1e-10);
    }
  }
  // example probe: positive
  EXPECT_GT(drift_full(0.25, PhaseState(0.0, 8.0), Potential::zero()), 0.0);
}

TEST(Drift, SkeletonDriftMatchesKernelQuadratureOnFlatTorus) {
  const double lambda = 0.25;
  const ModelParams m(lambda, Potential::zero());
  const double rho = 8.0;
  const double w0 = lyapunov_skeleton(lambda, rho);
  auto integrand = [&](double q) {
    return jump_kernel(lambda, rho, q) * (w0 - lyapunov_skeleton(lambda, std::abs(q)));
  };
  const double oracle = (integrate_adaptive(integrand, -40.0, 0.0, 1e-11, 1e-14) +
                         integrate_adaptive(integrand, 0.0, rho, 1e-11, 1e-14) +
                         integrate_adaptive(integrand, rho, 60.0, 1e-11, 1e-14)) /
                        escape_rate(lambda, rho);
  EXPECT_NEAR(drift_skeleton(lambda, CurveState{rho, 1}, m), oracle, 1e-9);
  EXPECT_GT(oracle, 0.0);
  const ModelParams cos(0.125, Potential::cosine(1.0));
  EXPECT_GT(drift_skeleton(0.125, CurveState{16.0, 1}, cos), 0.0);
}

TEST(Drift, ChecksReportBothDirections) {
  DriftCheckConfig cfg;
  const auto skel = check_drift_skeleton(cfg);
  EXPECT_TRUE(skel.lower);
  EXPECT_TRUE(skel.pass);
  for (double c : skel.c_hat) {
    EXPECT_GT(c, 0.0);
  }
  const auto full = check_drift_full(cfg);
  ASSERT_EQ(full.c_hat.size(), 4u);
  for (double c : full.c_hat) {
    EXPECT_GT(c, 0.0);
  }
  // at |p| = 2/lambda the full drift scales like lambda^2, so d/lambda roughly halves
  const double a = drift_full(0.25, PhaseState(0.0, 8.0), Potential::zero()) / 0.25;
  const double b = drift_full(0.125, PhaseState(0.0, 16.0), Potential::zero()) / 0.125;
  EXPECT_NEAR(a / b, 2.0, 0.2);
}

TEST(LowEnergy, ZeroPayoffAndFiniteConstants) {
  LowEnergyCheckConfig cfg;
  cfg.lambdas = {0.25, 0.125};
  cfg.budget.paths = 500;
  const auto rep = check_low_energy_integral(cfg);
  for (double c : rep.c_hat) {
    EXPECT_TRUE(std::isfinite(c));
    EXPECT_GT(c, 0.0);
  }
  // the Gibbs integral of a flat band is a Gaussian probability
  EXPECT_NEAR(detail::gibbs_band_integral(0.25, BandPayoff::momentum(-1e3, 1e3), Potential::zero()),
              std::sqrt(2.0 * std::numbers::pi / 0.25), 1e-12);
  cfg.L = 4.0;
  const auto fw = check_fw_low_energy_integral(cfg);
  for (double c : fw.c_hat) {
    EXPECT_TRUE(std::isfinite(c));
  }
}

TEST(LowEnergy, ReducedRightSideMatchesPhaseSpaceIntegral) {
  // with a potential the band integral reaches the separatrix, where the period blows up
  LowEnergyCheckConfig cfg;
  cfg.lambdas = {0.25};
  cfg.potential = Potential::cosine(1.0);
  cfg.L = 5.0;
  cfg.budget.paths = 200;
  const auto rep = check_fw_low_energy_integral(cfg);
  ASSERT_EQ(rep.probes.size(), 2u);
  const double lambda = 0.25;
  auto oracle = [&](double e_lo, double e_hi) {
    // sum over both signs of int dx int dp e^{-lambda H} on {max(e_lo, sup V) < H < e_hi}
    const double k = std::sqrt(lambda / 2.0);
    double acc = 0.0;
    const int nx = 20000;
    for (int i = 0; i < nx; ++i) {
      const double x = (i + 0.5) / nx;
      const double v = cfg.potential.value(x);
      const double a = std::sqrt(2.0 * (std::max(e_lo, 1.0) - v));
      const double b = std::sqrt(2.0 * (e_hi - v));
      acc += 2.0 * std::exp(-lambda * v) * std::sqrt(std::numbers::pi / (2.0 * lambda)) *
             (std::erf(b * k) - std::erf(a * k)) / nx;
    }
    return acc;
  };
  const double l = ModelParams(lambda, cfg.potential).l;
  EXPECT_NEAR(rep.probes[0].rhs, oracle(l, cfg.L), 1e-3 * rep.probes[0].rhs);
  EXPECT_NEAR(rep.probes[1].rhs, oracle(0.0, 2.0 * cfg.L), 1e-3 * rep.probes[1].rhs);
}

TEST(SkeletonTail, SweepSkipsRadiiInsideTheTrappedRegion) {
  SkeletonTailSweepConfig cfg;
  cfg.base.potential = Potential::cosine(1.0);
  cfg.base.samples = 1000;
  cfg.lambdas = {0.5, 0.25};
  const auto s = check_skeleton_tail_sweep(cfg);
  // sqrt(2 l) = sqrt(6) exceeds 1/lambda = 2, so lambda = 1/2 has no probe
  ASSERT_EQ(s.report.lambdas, std::vector<double>{0.25});
  for (const auto& p : s.probes) {
    EXPECT_GE(p.rho, std::sqrt(6.0));
  }
}

TEST(Homogenization, FlatTorusHasNoPositionDependence) {
  const ModelParams m(0.25, Potential::zero());
  ResolventQuery q;
  q.h = Modulator::low_energy(m);
  q.f = Payoff::indicator_band(1, 3);
  q.n = 500;
  q.seed = 4;
  const auto e = paired_homogenization(PhaseState(0.3, 5.0), q, m);
  EXPECT_EQ(e.diff.mean, 0.0);
  const auto split = homogenization_probe(PhaseState(0.3, 5.0), q, m);
  // the split estimator weights independent node samples, so it is only zero in mean
  EXPECT_LE(std::abs(split.diff), 3.0 * split.diff_err);
}

TEST(Homogenization, SplitAndPairedEstimatorsAgree) {
  const ModelParams m(0.25, Potential::cosine(1.0));
  for (PhaseState s : {PhaseState(0.25, 4.0), PhaseState(0.5, -6.0)}) {
    ResolventQuery q;
    q.h = Modulator::low_energy(m);
    q.f = Payoff::indicator_band(4, 8);
    q.n = 6000;
    q.seed = 8;
    const auto paired = paired_homogenization(s, q, m);
    q.seed = 9;
    const auto split = homogenization_probe(s, q, m);
    EXPECT_LE(std::abs(paired.point.mean - split.point),
              3.0 * std::hypot(paired.point.std_err, split.point_err));
    EXPECT_LE(std::abs(paired.hat.mean - split.hat),
              3.0 * std::hypot(paired.hat.std_err, split.hat_err));
    EXPECT_LE(std::abs(paired.diff.mean - split.diff),
              3.0 * std::hypot(paired.diff.std_err, split.diff_err));
  }
}

TEST(Homogenization, SplitEstimatorOrbitIntegralsAreExactForConstantPayoff) {
  // f = 1 with h = 1{H <= l}: U is the expected killing time, and the pre-collision
  // part from a kappa start is the mean hitting time of a Poisson clock
  const ModelParams m(0.5, Potential::cosine(1.0));
  const detail::OrbitHazard orbit(PhaseState(0.1, 5.0), m, 128);
  const CurveState g = curve_state(PhaseState(0.1, 5.0), m);
  EXPECT_NEAR(orbit.total(), fw_escape_rate(0.5, g, m) * orbit_period(g, m), 1e-10);
  EXPECT_NEAR(orbit.k_total(), [&] {
    double acc = 0.0;
    const auto rule = gauss_legendre_panels(0.0, 1.0, 1.0 / 128, 8);
    for (std::size_t i = 0; i < rule.size(); ++i) {
      acc += rule.weights[i] * orbit.kappa(rule.nodes[i]) * std::exp(orbit.hazard(rule.nodes[i]));
    }
    return acc;
  }(), 1e-10);
}

TEST(Homogenization, CheckRecordsScaledRatios) {
  HomogenizationConfig cfg;
  cfg.lambdas = {0.25};
  cfg.multiples = {1.0};
  cfg.extra_momenta = {};
  cfg.x_probes = {0.25};
  cfg.budget.paths = 300;
  const auto rep = check_homogenization_error(cfg);
  ASSERT_EQ(rep.c_hat.size(), 1u);
  for (const auto& p : rep.probes) {
    EXPECT_DOUBLE_EQ(p.rhs, std::max(1.0 / (1.0 + std::abs(p.p)), 0.25));
    EXPECT_LE(p.lhs / p.rhs, rep.c_hat[0] + 1e-12);
  }
}

TEST(Horseshoe, LowEnergyPayoffReducesToContainment) {
  HorseshoeConfig cfg;
  cfg.lambdas = {0.25};
  cfg.budget.paths = 1500;
  const auto rep = check_horseshoe(cfg);
  ASSERT_EQ(rep.probes.size(), 2u);
  const auto& low = rep.probes[1];
  EXPECT_EQ(low.payoff, "p[1,3]");
  EXPECT_LE(low.lhs, low.rhs + 3.0 * low.lhs_err * 1.5);
  EXPECT_TRUE(std::isfinite(rep.c_hat[0]));
}

TEST(SkeletonTail, SupportAndHittingIdentity) {
  SkeletonTailConfig cfg;
  cfg.samples = 40000;
  const auto rep = check_skeleton_tail(cfg);
  EXPECT_TRUE(rep.support_ok);
  EXPECT_EQ(rep.truncated, 0);
  EXPECT_GT(rep.checked_bins, 10);
  EXPECT_TRUE(rep.identity_pass) << rep.worst_identity_z;
  double total = 0.0;
  for (std::size_t b = 0; b < rep.bin_lo.size(); ++b) {
    total += rep.density[b] * (rep.bin_hi[b] - rep.bin_lo[b]);
    EXPECT_LE(rep.bin_hi[b], cfg.rho - 1.0 + 1e-12);
  }
  EXPECT_NEAR(total, 1.0, 1e-12);  // every path lands (no exits on the flat torus)
}

TEST(Determinism, ReportsRepeatExactly) {
  LowEnergyCheckConfig cfg;
  cfg.lambdas = {0.25};
  cfg.budget.paths = 300;
  cfg.budget.workers = 1;
  const auto a = check_low_energy_integral(cfg);
  cfg.budget.workers = 3;
  const auto b = check_low_energy_integral(cfg);
  ASSERT_EQ(a.probes.size(), b.probes.size());
  for (std::size_t k = 0; k < a.probes.size(); ++k) {
    EXPECT_EQ(a.probes[k].lhs, b.probes[k].lhs);
    EXPECT_EQ(a.probes[k].lhs_err, b.probes[k].lhs_err);
  }
  SkeletonTailConfig t;
  t.samples = 2000;
  t.workers = 1;
  const auto ta = check_skeleton_tail(t);
  t.workers = 2;
  const auto tb = check_skeleton_tail(t);
  EXPECT_EQ(ta.hits, tb.hits);
  EXPECT_EQ(ta.identity_diff, tb.identity_diff);
}
