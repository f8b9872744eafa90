#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "resolvent_lab/level_curves.hpp"
#include "resolvent_lab/model.hpp"
#include "resolvent_lab/parallel.hpp"
#include "resolvent_lab/quadrature.hpp"

namespace resolvent_lab {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using MomentumFn = std::function<double(double)>;

/// Default momentum cut-off max(20, 8/lambda). At p = 8/lambda the kernel
/// centre sits 8 standard deviations inside, so the mass lost past the
/// cut-off is below 1e-14.
inline double default_p_max(double lambda) {
  return lambda > 0.0 ? std::max(20.0, 8.0 / lambda) : 20.0;
}

/// Composite Gauss-Legendre nodes on [-P, P], symmetric about 0.
struct MomentumGrid {
  std::vector<double> nodes;
  std::vector<double> weights;
  double p_max = 0.0;

  std::size_t size() const noexcept { return nodes.size(); }
};

/// Panels of width <= `panel_width` with `points` nodes each. Breakpoints are
/// mirrored so the grid stays symmetric; 0 is always a panel edge.
inline MomentumGrid make_momentum_grid(double p_max, double panel_width = 0.5, int points = 16,
                                       const std::vector<double>& breakpoints = {}) {
  if (!(p_max > 0.0)) {
    throw std::invalid_argument("momentum grid needs p_max > 0");
  }
  std::vector<double> cuts{0.0};
  for (double b : breakpoints) {
    cuts.push_back(std::abs(b));
    cuts.push_back(-std::abs(b));
  }
  const auto rule = gauss_legendre_panels(-p_max, p_max, panel_width, points, cuts);
  return MomentumGrid{rule.nodes, rule.weights, p_max};
}

/// Grid with P = default_p_max(lambda) and the breakpoints of h and f.
inline MomentumGrid make_momentum_grid_for(double lambda, const std::vector<double>& breakpoints,
                                           double panel_width = 0.5, int points = 16) {
  return make_momentum_grid(default_p_max(lambda), panel_width, points, breakpoints);
}

/// Solution of the momentum-only resolvent equation on a grid, with the
/// Nystrom interpolant for off-grid momenta.
struct MomentumSolution {
  MomentumGrid grid;
  Eigen::VectorXd u;
  double residual = 0.0;   // sup-norm of the discrete residual
  double tail_mass = 0.0;  // largest kernel mass lost past +-P
  double lambda = 0.0;
  MomentumFn h;
  MomentumFn f;

  /// u(p) = (f(p) + sum_j w_j J(p, p_j) u_j) / (h(p) + sum_j w_j J(p, p_j)).
  double operator()(double p) const {
    double num = f(p);
    double den = h(p);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const double k = grid.weights[j] * jump_kernel(lambda, p, grid.nodes[j]);
      num += k * u[static_cast<Eigen::Index>(j)];
      den += k;
    }
    if (!(den > 0.0)) {
      throw SolverError("Nystrom interpolant has a vanishing denominator");
    }
    return num / den;
  }

  double sup_norm() const { return u.size() > 0 ? u.cwiseAbs().maxCoeff() : 0.0; }
};

namespace detail {

/// (h + sum_j w_j J_ij) on the diagonal, -w_j J_ij off it. Writing the jump
/// term as sum_j w_j J_ij (u_i - u_j) keeps constants in the kernel of the
/// collision part and absorbs the lost tail mass into the escape rate.
inline Eigen::MatrixXd momentum_matrix(double lambda, const MomentumGrid& g,
                                       const std::vector<double>& hv) {
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double diag = hv[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) {
        continue;
      }
      const double k = g.weights[static_cast<std::size_t>(j)] *
                       jump_kernel(lambda, g.nodes[static_cast<std::size_t>(i)],
                                   g.nodes[static_cast<std::size_t>(j)]);
      a(i, j) = -k;
      diag += k;
    }
    a(i, i) = diag;
  }
  return a;
}

inline double truncation_tail(double lambda, const MomentumGrid& g) {
  double worst = 0.0;
  for (double p : g.nodes) {
    const double lost = escape_rate(lambda, p) - jump_kernel_mass(lambda, p, -g.p_max, g.p_max);
    worst = std::max(worst, lost);
  }
  return worst;
}

}  // namespace detail

/// Solve h u - int J (u' - u) dp' = f on the grid by a dense LU.
inline MomentumSolution solve_momentum_resolvent(double lambda, const MomentumFn& h,
                                                 const MomentumFn& f, const MomentumGrid& grid) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  std::vector<double> hv(grid.size());
  Eigen::VectorXd rhs(n);
  double h_max = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    hv[i] = h(grid.nodes[i]);
    if (hv[i] < 0.0) {
      throw std::invalid_argument("modulator must be nonnegative");
    }
    h_max = std::max(h_max, hv[i]);
    rhs[static_cast<Eigen::Index>(i)] = f(grid.nodes[i]);
  }
  if (!(h_max > 1e-300)) {
    throw SolverError("modulator vanishes on the grid: resolvent system is singular");
  }
  const Eigen::MatrixXd a = detail::momentum_matrix(lambda, grid, hv);
  MomentumSolution sol;
  sol.grid = grid;
  sol.lambda = lambda;
  sol.h = h;
  sol.f = f;
  sol.u = a.partialPivLu().solve(rhs);
  if (!sol.u.allFinite()) {
    throw SolverError("momentum resolvent solve produced non-finite values");
  }
  sol.residual = (a * sol.u - rhs).cwiseAbs().maxCoeff();
  sol.tail_mass = detail::truncation_tail(lambda, grid);
  return sol;
}

/// h and f of the momentum-only model (V = 0) as functions of p.
inline MomentumFn momentum_view(const Modulator& h, const ModelParams& params) {
  return [h, params](double p) { return h(PhaseState(0.0, p), params); };
}

inline MomentumFn momentum_view(const Payoff& f, const ModelParams& params) {
  return [f, params](double p) { return f(PhaseState(0.0, p), params); };
}

/// Discontinuities in p of an energy-indicator modulator and of a payoff,
/// for the flat potential.
inline std::vector<double> momentum_breakpoints(const Modulator& h, const Payoff& f) {
  std::vector<double> bps = f.momentum_breakpoints();
  if (h.is_energy_indicator() && h.level() > 0.0) {
    bps.push_back(std::sqrt(2.0 * h.level()));
  }
  if (f.kind() == Payoff::Kind::energy_band) {
    for (double e : {f.lo(), f.hi()}) {
      if (e > 0.0) {
        bps.push_back(std::sqrt(2.0 * e));
      }
    }
  }
  return bps;
}

/// Partial sums of the Neumann series for U_h through the standard resolvent.
struct NeumannResult {
  Eigen::VectorXd u;
  int terms = 0;
  double truncation_bound = 0.0;
  std::vector<double> partial_sums_at_probe;  // value at the node nearest p = 0
};

/// U_h f = sum_n U_hh (M_{hh - h} U_hh)^n f, with U_hh = ((hh + E) - J)^{-1}.
/// Stops when the geometric tail bound falls below `tol` (1 + |sum|).
inline NeumannResult neumann_series_resolvent(double lambda, const MomentumFn& h, double h_hat,
                                              const MomentumFn& f, const MomentumGrid& grid,
                                              double tol = 1e-9, int max_terms = 100000) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  std::vector<double> hv(grid.size(), h_hat);
  Eigen::VectorXd gap(n);
  Eigen::VectorXd rhs(n);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double hi = h(grid.nodes[i]);
    if (hi > h_hat * (1.0 + 1e-12) || hi < 0.0) {
      throw std::invalid_argument("Neumann series needs 0 <= h <= h_hat");
    }
    gap[static_cast<Eigen::Index>(i)] = std::max(h_hat - hi, 0.0);
    rhs[static_cast<Eigen::Index>(i)] = f(grid.nodes[i]);
  }
  const auto lu = detail::momentum_matrix(lambda, grid, hv).partialPivLu();
  std::size_t probe = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (std::abs(grid.nodes[i]) < std::abs(grid.nodes[probe])) {
      probe = i;
    }
  }
  NeumannResult out;
  Eigen::VectorXd term = lu.solve(rhs);
  out.u = term;
  out.terms = 1;
  out.partial_sums_at_probe.push_back(out.u[static_cast<Eigen::Index>(probe)]);
  double prev_norm = term.cwiseAbs().maxCoeff();
  int growing = 0;
  while (out.terms < max_terms) {
    if (prev_norm == 0.0) {
      out.truncation_bound = 0.0;
      return out;
    }
    term = lu.solve(gap.cwiseProduct(term));
    out.u += term;
    ++out.terms;
    out.partial_sums_at_probe.push_back(out.u[static_cast<Eigen::Index>(probe)]);
    const double norm = term.cwiseAbs().maxCoeff();
    const double ratio = norm / prev_norm;
    prev_norm = norm;
    growing = ratio >= 1.0 ? growing + 1 : 0;
    if (growing >= 10) {
      throw SolverError("Neumann series diverges (term ratio >= 1 over 10 terms)");
    }
    if (ratio < 1.0) {
      out.truncation_bound = norm * ratio / (1.0 - ratio);
      if (out.truncation_bound <= tol * (1.0 + out.u.cwiseAbs().maxCoeff())) {
        return out;
      }
    }
  }
  throw SolverError("Neumann series did not reach its tolerance");
}

/// Radial grid on both branches of the untrapped region.
struct FwGrid {
  std::vector<double> rho;  // nodes on one branch
  std::vector<double> weights;
  double r_min = 0.0;  // jumps below r_min leave the domain
  double r_max = 0.0;

  std::size_t size() const noexcept { return 2 * rho.size(); }
  CurveState state(std::size_t k) const {
    const std::size_t m = rho.size();
    return k < m ? CurveState{rho[k], 1} : CurveState{rho[k - m], -1};
  }
  double weight(std::size_t k) const { return weights[k % rho.size()]; }
};

/// Nodes on (sqrt(2 sup V) + delta, r_max] per branch; for V = 0 the lower end
/// is 0 and the grid coincides with the momentum grid folded at p = 0.
inline FwGrid make_fw_grid(const ModelParams& params, double r_max, double delta = 0.05,
                           double panel_width = 0.5, int points = 16,
                           std::vector<double> breakpoints = {}) {
  FwGrid g;
  g.r_min = params.potential.is_zero() ? 0.0 : separatrix_radius(params.potential) + delta;
  g.r_max = r_max;
  if (!(r_max > g.r_min)) {
    throw std::invalid_argument("FW grid needs r_max above the separatrix");
  }
  for (double& b : breakpoints) {
    b = std::abs(b);
  }
  const auto rule = gauss_legendre_panels(g.r_min, r_max, panel_width, points, breakpoints);
  g.rho = rule.nodes;
  g.weights = rule.weights;
  return g;
}

struct FwSolution {
  FwGrid grid;
  Eigen::VectorXd u;  // branch +1 nodes then branch -1 nodes
  double residual = 0.0;
  double tail_mass = 0.0;  // largest rate of jumps past r_max
  std::vector<double> exit_rate;

  double at(std::size_t k) const { return u[static_cast<Eigen::Index>(k)]; }
  double sup_norm() const { return u.size() > 0 ? u.cwiseAbs().maxCoeff() : 0.0; }
};

/// Nystrom solve of f = h U + int J(g, g') (U(g) - U(g')) dg' on the FW grid.
/// Jumps below r_min are absorbing (U = 0 there); jumps past r_max are folded
/// back into the escape rate like the momentum solver's tail.
inline FwSolution solve_fw_resolvent(double lambda, const CurveFn& h, const CurveFn& f,
                                     const FwGrid& grid, const ModelParams& params,
                                     double tol = 1e-8, int workers = 0) {
  const std::size_t n = grid.size();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                            static_cast<Eigen::Index>(n));
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
  FwSolution sol;
  sol.grid = grid;
  sol.exit_rate.assign(n, 0.0);
  std::vector<double> tails(n, 0.0);
  double h_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const CurveState g = grid.state(i);
    const double hi = h(g);
    h_max = std::max(h_max, hi);
    rhs[static_cast<Eigen::Index>(i)] = f(g);
  }
  if (!(h_max > 0.0)) {
    throw SolverError("FW modulator vanishes on the grid: system is singular");
  }
  parallel_for(n, workers > 0 ? workers : default_workers(), [&](std::size_t i) {
    const CurveState g = grid.state(i);
    const auto ii = static_cast<Eigen::Index>(i);
    double diag = h(g);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) {
        continue;
      }
      const CurveState gj = grid.state(j);
      const double k =
          grid.weight(j) * fw_jump_density_rho(lambda, g, gj.rho, gj.eps, params, tol);
      a(ii, static_cast<Eigen::Index>(j)) = -k;
      diag += k;
    }
    double exit = 0.0;
    double beyond = 0.0;
    if (!params.potential.is_zero()) {
      exit = fw_exit_rate(lambda, g, params);
      for (int e : {1, -1}) {
        exit += fw_bin_rate(lambda, g, e, 0.0, grid.r_min, params);
      }
    }
    for (int e : {1, -1}) {
      beyond += fw_bin_rate(lambda, g, e, grid.r_max, std::numeric_limits<double>::infinity(),
                            params);
    }
    sol.exit_rate[i] = exit;
    tails[i] = beyond;
    a(ii, ii) = diag + exit;
  });
  sol.u = a.partialPivLu().solve(rhs);
  if (!sol.u.allFinite()) {
    throw SolverError("FW resolvent solve produced non-finite values");
  }
  sol.residual = (a * sol.u - rhs).cwiseAbs().maxCoeff();
  sol.tail_mass = *std::max_element(tails.begin(), tails.end());
  return sol;
}

/// Uniform-x, Gauss-Legendre-p grid on the cylinder.
struct PhaseGrid {
  int nx = 256;
  MomentumGrid p;

  double dx() const noexcept { return 1.0 / nx; }
  double x(int k) const noexcept { return k * dx(); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(nx) * p.size(); }
  Eigen::Index index(int k, std::size_t i) const noexcept {
    return static_cast<Eigen::Index>(static_cast<std::size_t>(k) * p.size() + i);
  }
};

struct PhaseSolution {
  PhaseGrid grid;
  Eigen::VectorXd u;
  double residual = 0.0;  // relative residual reported by the iterative solver
  int iterations = 0;

  double at(int k, std::size_t i) const { return u[grid.index(k, i)]; }

  /// Linear interpolation in x (periodic) and in p between nodes.
  double operator()(const PhaseState& s) const {
    const auto& nodes = grid.p.nodes;
    const double fx = s.x * grid.nx;
    const int k0 = static_cast<int>(std::floor(fx)) % grid.nx;
    const int k1 = (k0 + 1) % grid.nx;
    const double tx = fx - std::floor(fx);
    auto at_p = [&](int k) {
      if (s.p <= nodes.front()) {
        return at(k, 0);
      }
      if (s.p >= nodes.back()) {
        return at(k, nodes.size() - 1);
      }
      const auto it = std::upper_bound(nodes.begin(), nodes.end(), s.p);
      const std::size_t i1 = static_cast<std::size_t>(it - nodes.begin());
      const std::size_t i0 = i1 - 1;
      const double tp = (s.p - nodes[i0]) / (nodes[i1] - nodes[i0]);
      return (1.0 - tp) * at(k, i0) + tp * at(k, i1);
    };
    return (1.0 - tx) * at_p(k0) + tx * at_p(k1);
  }
};

namespace detail {

/// Block-Jacobi preconditioner with one dense block per x column.
class BlockJacobiPreconditioner {
 public:
  using StorageIndex = int;
  enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic };

  void set_block_size(Eigen::Index b) { block_ = b; }

  template <class Mat>
  BlockJacobiPreconditioner& analyzePattern(const Mat&) {
    return *this;
  }

  template <class Mat>
  BlockJacobiPreconditioner& factorize(const Mat& m) {
    return compute(m);
  }

  template <class Mat>
  BlockJacobiPreconditioner& compute(const Mat& m) {
    const Eigen::Index blocks = m.rows() / block_;
    lus_.clear();
    lus_.reserve(static_cast<std::size_t>(blocks));
    for (Eigen::Index b = 0; b < blocks; ++b) {
      const Eigen::MatrixXd dense = Eigen::MatrixXd(m.block(b * block_, b * block_, block_, block_));
      lus_.emplace_back(dense);
    }
    return *this;
  }

  template <class Rhs>
  Eigen::VectorXd solve(const Rhs& r) const {
    Eigen::VectorXd out(r.size());
    for (std::size_t b = 0; b < lus_.size(); ++b) {
      const auto off = static_cast<Eigen::Index>(b) * block_;
      out.segment(off, block_) = lus_[b].solve(Eigen::VectorXd(r.segment(off, block_)));
    }
    return out;
  }

  Eigen::ComputationInfo info() const { return Eigen::Success; }

 private:
  Eigen::Index block_ = 1;
  std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> lus_;
};

}  // namespace detail

/// First-order upwind solve of h u - (p d/dx - V' d/dp) u - collisions = f.
///
/// Transport uses one-sided differences against the characteristic direction,
/// so the matrix is an M-matrix; the p boundary is reflecting. Accuracy is
/// first order in dx and in the p spacing.
inline PhaseSolution solve_phase_space_resolvent(double lambda, const Modulator& h,
                                                 const Payoff& f, const PhaseGrid& grid,
                                                 const ModelParams& params, double tol = 1e-10,
                                                 int max_iterations = 2000) {
  const std::size_t np = grid.p.size();
  const int nx = grid.nx;
  const auto n = static_cast<Eigen::Index>(grid.size());
  const auto& pn = grid.p.nodes;
  const Potential& v = params.potential;

  Eigen::MatrixXd coll = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(np),
                                               static_cast<Eigen::Index>(np));
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t j = 0; j < np; ++j) {
      if (i != j) {
        coll(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            grid.p.weights[j] * jump_kernel(lambda, pn[i], pn[j]);
      }
    }
  }
  const Eigen::VectorXd coll_rate = coll.rowwise().sum();

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(nx) * np * (np + 4));
  Eigen::VectorXd rhs(n);
  const double dx = grid.dx();
  double h_max = 0.0;
  for (int k = 0; k < nx; ++k) {
    const double x = grid.x(k);
    const double drift = -v.derivative(x);  // dp/dt along the flow
    for (std::size_t i = 0; i < np; ++i) {
      const Eigen::Index row = grid.index(k, i);
      const PhaseState s(x, pn[i]);
      const double hv = h(s, params);
      h_max = std::max(h_max, hv);
      rhs[row] = f(s, params);
      double diag = hv + coll_rate[static_cast<Eigen::Index>(i)];
      for (std::size_t j = 0; j < np; ++j) {
        const double c = coll(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (c != 0.0) {
          trips.emplace_back(row, grid.index(k, j), -c);
        }
      }
      const double p = pn[i];
      if (p != 0.0) {
        const int kn = p > 0.0 ? (k + 1) % nx : (k + nx - 1) % nx;
        const double a = std::abs(p) / dx;
        diag += a;
        trips.emplace_back(row, grid.index(kn, i), -a);
      }
      if (drift > 0.0 && i + 1 < np) {
        const double a = drift / (pn[i + 1] - pn[i]);
        diag += a;
        trips.emplace_back(row, grid.index(k, i + 1), -a);
      } else if (drift < 0.0 && i > 0) {
        const double a = -drift / (pn[i] - pn[i - 1]);
        diag += a;
        trips.emplace_back(row, grid.index(k, i - 1), -a);
      }
      trips.emplace_back(row, row, diag);
    }
  }
  if (!(h_max > 0.0)) {
    throw SolverError("modulator vanishes on the phase grid: system is singular");
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());

  Eigen::BiCGSTAB<Eigen::SparseMatrix<double, Eigen::RowMajor>,
                  detail::BlockJacobiPreconditioner>
      solver;
  solver.preconditioner().set_block_size(static_cast<Eigen::Index>(np));
  solver.setTolerance(tol);
  solver.setMaxIterations(max_iterations);
  solver.compute(a);
  PhaseSolution sol;
  sol.grid = grid;
  sol.u = solver.solve(rhs);
  if (solver.info() != Eigen::Success || !sol.u.allFinite()) {
    throw SolverError("phase-space solver did not converge");
  }
  sol.iterations = static_cast<int>(solver.iterations());
  const double scale = std::max(rhs.norm(), 1e-300);
  sol.residual = (a * sol.u - rhs).norm() / scale;
  return sol;
}

/// Piecewise-constant function on the line: sum of weight * 1_[lo, hi].
struct Band {
  double lo = 0.0;
  double hi = 0.0;
  double weight = 1.0;
};

inline double bands_value(const std::vector<Band>& f, double p) {
  double s = 0.0;
  for (const Band& b : f) {
    if (p >= b.lo && p <= b.hi) {
      s += b.weight;
    }
  }
  return s;
}

/// Brownian resolvent modulated by hbar times the local time at 0:
/// U(p) = (1/hbar) int f + 2 int_0^inf min(q, |p|) f(sign(p) q) dq.
inline double brownian_example_u(double p, const std::vector<Band>& f, double hbar) {
  if (!(hbar > 0.0)) {
    throw std::invalid_argument("hbar must be positive");
  }
  double total = 0.0;
  double branch = 0.0;
  const double a = std::abs(p);
  for (const Band& b : f) {
    if (!(b.hi >= b.lo)) {
      throw std::invalid_argument("band needs lo <= hi");
    }
    total += b.weight * (b.hi - b.lo);
    // part of the band on the side of p, mapped to q >= 0
    double lo = 0.0;
    double hi = 0.0;
    if (p >= 0.0) {
      lo = std::max(b.lo, 0.0);
      hi = std::max(b.hi, 0.0);
    } else {
      lo = std::max(-b.hi, 0.0);
      hi = std::max(-b.lo, 0.0);
    }
    if (hi <= lo) {
      continue;
    }
    // int_lo^hi min(q, a) dq
    const double below = std::clamp(a, lo, hi);
    branch += b.weight * (0.5 * (below * below - lo * lo) + a * (hi - below));
  }
  return total / hbar + 2.0 * branch;
}

struct BrownianResidual {
  double ode_residual = 0.0;    // sup of |-u''/2 - f| away from 0 and band edges
  double jump_residual = 0.0;   // |u'(0+) - u'(0-) - 2 hbar u(0)|
  double continuity = 0.0;      // |u(0+) - u(0-)|
  double grid = 0.0;
};

/// Finite-difference check of -u''/2 = f off 0 and of the jump condition
/// u'(0+) - u'(0-) = 2 hbar u(0), obtained by integrating the equation across 0.
inline BrownianResidual brownian_ode_residual(const std::vector<Band>& f, double hbar, double dx,
                                              double half_width = 10.0) {
  auto u = [&](double p) { return brownian_example_u(p, f, hbar); };
  std::vector<double> edges{0.0};
  for (const Band& b : f) {
    edges.push_back(b.lo);
    edges.push_back(b.hi);
  }
  auto near_edge = [&](double p) {
    for (double e : edges) {
      if (std::abs(p - e) <= dx * (1.0 + 1e-9)) {
        return true;
      }
    }
    return false;
  };
  BrownianResidual out;
  out.grid = dx;
  const int m = static_cast<int>(std::round(half_width / dx));
  for (int k = -m + 1; k < m; ++k) {
    const double p = k * dx;
    if (near_edge(p)) {
      continue;
    }
    const double second = (u(p + dx) - 2.0 * u(p) + u(p - dx)) / (dx * dx);
    out.ode_residual = std::max(out.ode_residual, std::abs(-0.5 * second - bands_value(f, p)));
  }
  // second-order one-sided derivatives (exact for the piecewise quadratic u)
  const double d_plus = (-3.0 * u(0.0) + 4.0 * u(dx) - u(2.0 * dx)) / (2.0 * dx);
  const double d_minus = (3.0 * u(-0.0) - 4.0 * u(-dx) + u(-2.0 * dx)) / (2.0 * dx);
  out.jump_residual = std::abs(d_plus - d_minus - 2.0 * hbar * u(0.0));
  const double tiny = 1e-14;
  out.continuity = std::abs(u(tiny) - u(-tiny));
  return out;
}

}  // namespace resolvent_lab
