#pragma once

// Property suites shared by the unit tests and the acceptance runner. Each
// returns a verdict with a one-line description of the worst observation.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "drsub/analysis.hpp"
#include "drsub/bounds.hpp"
#include "drsub/objectives.hpp"
#include "drsub/optimizers.hpp"
#include "drsub/rng.hpp"
#include "oracles.hpp"

namespace suites {

using drsub::Index;
using drsub::Matrix;
using drsub::Vector;

struct Verdict {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

/// Random polytope with A ~ U[0,1], b ~ U[0.3,1.5], u ~ U[0.2,2].
inline drsub::Polytope random_polytope(drsub::Rng& rng, Index n, Index m) {
  Matrix a(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = rng.uniform();
  Vector b(m), u(n);
  for (Index i = 0; i < m; ++i) b(i) = rng.uniform(0.3, 1.5);
  for (Index j = 0; j < n; ++j) u(j) = rng.uniform(0.2, 2.0);
  return drsub::Polytope(a, b, u);
}

/// Listed projection / LMO examples plus grid-minimizer and vertex-enumeration
/// comparisons on random small polytopes.
inline Verdict geometry_oracles() {
  Verdict v;
  Matrix a(1, 2);
  a << 1, 1;
  const drsub::Polytope tri(a, Vector::Ones(1), Vector::Ones(2));
  const auto box = drsub::Polytope::box(Vector::Ones(2));

  Vector y(2);
  y << 1, 1;
  const Vector px = tri.project(y);
  const Vector grid = oracle::grid_project_2d(tri, y, 1e-3);
  if ((px - Vector::Constant(2, 0.5)).norm() > 1e-7 || (px - grid).norm() > 2e-3) v.fail("projection of (1,1)");
  y << 2, -1;
  if (box.project(y) != (Vector(2) << 1, 0).finished()) v.fail("box clamp");
  Vector g(2);
  g << -1, -1;
  if (box.lmo(g) != Vector::Zero(2)) v.fail("lmo negative direction");
  g << 1, 0;
  if (box.lmo(g) != (Vector(2) << 1, 0).finished()) v.fail("lmo zero-coefficient tie-break");
  g << 2, 1;
  if ((tri.lmo(g) - (Vector(2) << 1, 0).finished()).norm() > 1e-12) v.fail("lmo on simplex");

  drsub::Rng rng(20240601);
  double worst_grid = 0.0;
  for (int inst = 0; inst < 5; ++inst) {
    const auto p = random_polytope(rng, 2, 1 + inst % 3);
    for (int k = 0; k < 10; ++k) {
      Vector q(2);
      q << rng.uniform(-1, 3), rng.uniform(-1, 3);
      const Vector x = p.project(q);
      const Vector ref = oracle::grid_project_2d(p, q, 2e-3);
      if (!p.contains(x, 1e-6)) v.fail("projection infeasible");
      if ((x - q).norm() > (ref - q).norm() + 1e-6) v.fail("projection farther than grid minimizer");
      // Projection certificate against the feasible grid point.
      if ((ref - x).squaredNorm() > (ref - q).squaredNorm() - (x - q).squaredNorm() + 1e-9) {
        v.fail("grid point violates the projection inequality");
      }
      worst_grid = std::max(worst_grid, (x - ref).norm());
    }
  }
  if (worst_grid > 1e-2) v.fail("projection vs grid distance " + fmt(worst_grid));

  int mismatches = 0;
  for (int inst = 0; inst < 20; ++inst) {
    const auto p = random_polytope(rng, 2 + inst % 3, 1 + inst % 3);
    const auto vertices = oracle::enumerate_vertices(p);
    for (int k = 0; k < 50; ++k) {
      Vector d(p.dim());
      for (Index j = 0; j < d.size(); ++j) d(j) = rng.gaussian();
      const Vector lv = p.lmo(d);
      std::size_t arg = 0;
      for (std::size_t i = 1; i < vertices.size(); ++i)
        if (d.dot(vertices[i]) > d.dot(vertices[arg])) arg = i;
      if ((lv - vertices[arg]).norm() > 1e-9) ++mismatches;
    }
  }
  if (mismatches) v.fail(std::to_string(mismatches) + " lmo/vertex-enumeration mismatches");
  if (v.pass) v.detail = "grid distance max " + fmt(worst_grid) + ", 1000 lmo directions exact";
  return v;
}

inline double rel_error(const Vector& got, const Vector& want) {
  return (got - want).cwiseAbs().maxCoeff() / std::max(want.cwiseAbs().maxCoeff(), 1e-8);
}

inline double rel_error(const Matrix& got, const Matrix& want) {
  return (got - want).cwiseAbs().maxCoeff() / std::max(want.cwiseAbs().maxCoeff(), 1e-8);
}

/// Budget instances need a strictly positive point so the difference stencil
/// stays in the domain.
inline Vector interior_point(const drsub::Objective& f, drsub::Rng& rng, double margin) {
  Vector x = oracle::feasible_point(f.polytope(), rng);
  return x.cwiseMax(margin);
}

/// Analytic gradient vs central differences of the value (relative 1e-5) and
/// analytic Hessian vs central differences of the gradient (relative 1e-4),
/// at `points` random feasible points.
inline Verdict calculus(const drsub::Objective& f, int points, std::uint64_t seed) {
  Verdict v;
  drsub::Rng rng(seed);
  double worst_g = 0.0, worst_h = 0.0;
  for (int k = 0; k < points; ++k) {
    const Vector x = interior_point(f, rng, 1e-3);
    worst_g = std::max(worst_g, rel_error(f.gradient(x), oracle::fd_gradient(f, x, 1e-5)));
    worst_h = std::max(worst_h, rel_error(f.hessian(x), oracle::fd_hessian(f, x, 1e-5)));
  }
  if (worst_g > 1e-5) v.fail("gradient rel error " + fmt(worst_g));
  if (worst_h > 1e-4) v.fail("hessian rel error " + fmt(worst_h));
  if (v.pass) v.detail = "grad " + fmt(worst_g) + ", hess " + fmt(worst_h);
  return v;
}

/// Hessian-sign, monotonicity and gradient-antitone checks, `samples` each.
inline Verdict dr_properties(const drsub::Objective& f, int samples, std::uint64_t seed) {
  Verdict v;
  drsub::Rng rng(seed);
  const Index n = f.dim();
  double max_entry = -1e300;
  for (int k = 0; k < samples; ++k) {
    const Vector x = oracle::feasible_point(f.polytope(), rng);
    const Index i = std::min<Index>(n - 1, static_cast<Index>(rng.uniform() * n));
    const Index j = std::min<Index>(n - 1, static_cast<Index>(rng.uniform() * n));
    max_entry = std::max(max_entry, f.hessian(x)(i, j));
  }
  if (max_entry > 1e-12) v.fail("positive Hessian entry " + fmt(max_entry));

  int mono_bad = 0, anti_bad = 0;
  for (int k = 0; k < samples; ++k) {
    const Vector y = oracle::feasible_point(f.polytope(), rng);
    Vector x(n);
    for (Index j = 0; j < n; ++j) x(j) = y(j) * rng.uniform();
    const double fx = f.value(x), fy = f.value(y);
    if (fx > fy + 1e-9 * std::max(1.0, std::abs(fy))) ++mono_bad;
    const Vector gx = f.gradient(x), gy = f.gradient(y);
    const double scale = std::max(1.0, gy.cwiseAbs().maxCoeff());
    if ((gy - gx).maxCoeff() > 1e-9 * scale) ++anti_bad;
  }
  if (mono_bad) v.fail(std::to_string(mono_bad) + " monotonicity violations");
  if (anti_bad) v.fail(std::to_string(anti_bad) + " antitone violations");
  if (v.pass) v.detail = "max sampled Hessian entry " + fmt(max_entry);
  return v;
}

/// Small synthetic budget instance used across suites.
inline drsub::BudgetAllocationObjective small_budget(std::uint64_t seed, Index advertisers = 2) {
  drsub::BudgetOptions opt;
  opt.advertisers = advertisers;
  opt.upper = 2.0;
  return drsub::build_budget(drsub::generate_bipartite(seed, 6, 20, 0.35, 10), opt);
}

/// Final value of a noise-free run on the unit-interval NQP.
inline double unit_run(drsub::Algorithm algo, int T, drsub::StepRule step = drsub::StepRule::diminishing(2.0),
                       drsub::ReturnedConvention conv = drsub::ReturnedConvention::kLastIterate) {
  const auto f = oracle::unit_nqp();
  drsub::RunConfig cfg;
  cfg.algorithm = algo;
  cfg.iterations = T;
  cfg.step = step;
  cfg.returned = conv;
  cfg.master_seed = 1;
  return drsub::run_trial(f, drsub::NoiseModel::none(), cfg).returned_value;
}

/// Noise-free convergence on the unit-interval NQP (OPT = 0.5).
inline Verdict noise_free_convergence() {
  Verdict v;
  using drsub::Algorithm;
  const double scg = unit_run(Algorithm::kScg, 200);
  const double scgpp = unit_run(Algorithm::kScgpp, 200);
  if (scg < 0.499) v.fail("scg " + fmt(scg));
  if (scgpp < 0.499) v.fail("scgpp " + fmt(scgpp));

  // PGA with eta_t = 2/sqrt(t): best F(x_t) over the first 5 iterates.
  const auto f = oracle::unit_nqp();
  drsub::RunConfig cfg;
  cfg.algorithm = Algorithm::kPga;
  cfg.iterations = 5;
  cfg.master_seed = 1;
  const auto pga = drsub::run_trial(f, drsub::NoiseModel::none(), cfg);
  double pga_best = -1.0;
  for (const auto& it : pga.iterates) pga_best = std::max(pga_best, it.f_true);
  if (pga_best < 0.499) v.fail("pga within 5 iterations " + fmt(pga_best));

  cfg.algorithm = Algorithm::kBoostedPga;
  cfg.iterations = 500;
  const auto boosted = drsub::run_trial(f, drsub::NoiseModel::none(), cfg);
  const double boosted_last = boosted.iterates.back().f_true;
  if (boosted_last < 0.49) v.fail("boosted pga at T=500 " + fmt(boosted_last));
  v.detail = (v.pass ? "" : v.detail + "; ") + "scg " + fmt(scg) + ", scgpp " + fmt(scgpp) + ", pga " +
             fmt(pga_best) + ", boosted " + fmt(boosted_last);
  return v;
}

/// Constants with which every theorem's asymptote is checked.
inline drsub::BoundConstants asymptote_constants() {
  drsub::BoundConstants c;
  c.lipschitz = 0.1;
  c.diameter = 1.0;
  c.noise_bound = 0.1;
  c.sigma = 0.05;
  c.opt = 1.0;
  c.grad0_norm = 1.0;
  return c;
}

/// k_constant(0.5) == 2, Gamma identities, momentum series below K, and all
/// theorem bounds within 1e-6 of their asymptote at T = 1e12.
inline Verdict bounds_math() {
  Verdict v;
  if (drsub::k_constant(0.5) != 2.0) v.fail("k_constant(0.5) = " + fmt(drsub::k_constant(0.5)));

  double worst_gamma = 0.0;
  for (double x = 0.1; x < 10.0; x += 0.173) {
    worst_gamma = std::max(worst_gamma, std::abs(drsub::gamma_fn(x) - std::tgamma(x)) / std::tgamma(x));
    worst_gamma = std::max(worst_gamma, std::abs(drsub::gamma_fn(x + 1.0) - x * drsub::gamma_fn(x)) /
                                            drsub::gamma_fn(x + 1.0));
  }
  for (int k = 1; k <= 10; ++k) {
    worst_gamma = std::max(worst_gamma, std::abs(drsub::gamma_fn(k) - std::tgamma(k)) / std::tgamma(k));
  }
  worst_gamma = std::max(worst_gamma, std::abs(drsub::gamma_fn(0.5) - std::sqrt(M_PI)) / std::sqrt(M_PI));
  if (worst_gamma > 1e-9) v.fail("Gamma relative error " + fmt(worst_gamma));

  for (double alpha : {0.1, 0.25, 0.5, 0.75, 0.9}) {
    const double s = drsub::momentum_series_check(alpha, 1000000);
    if (!(s <= drsub::k_constant(alpha))) v.fail("momentum series above K at alpha " + fmt(alpha));
  }

  const auto c = asymptote_constants();
  const double big_t = 1e12;
  const double one_minus = -std::expm1(-1.0);
  double worst = 0.0;
  auto gap = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  gap(drsub::theorem1_bound(c, big_t, 0.01), 0.5 * c.opt);
  gap(drsub::theorem2_bound(c, big_t, 0.01, 1.0), one_minus * c.opt);
  gap(drsub::theorem2_bound(c, big_t, 0.01, 0.5), -std::expm1(-0.5) * c.opt);
  gap(drsub::theorem3_bound(c, big_t, 1e-3).bound, one_minus * c.opt);
  gap(drsub::theorem4_bound(c, big_t, 0.01, 0.5), one_minus * c.opt);
  gap(drsub::theorem5_bound(c, big_t, 1e-3).bound, one_minus * c.opt);
  if (worst > 1e-6) v.fail("asymptote gap " + fmt(worst));
  if (v.pass) v.detail = "Gamma rel err " + fmt(worst_gamma) + ", asymptote gap " + fmt(worst);
  return v;
}

/// Exact recovery of a c1 - c2/sqrt(t) curve and the shared-c1 refit compared
/// with a scalar grid search over c2.
inline Verdict fitting_exact() {
  Verdict v;
  drsub::Curve exact;
  for (int t = 1; t <= 100; ++t) {
    exact.t.push_back(t);
    exact.value.push_back(1.0 - 2.0 / std::sqrt(t));
  }
  const auto fit = drsub::fit_curve(exact);
  if (std::abs(fit.c1 - 1.0) > 1e-8 || std::abs(fit.c2 - 2.0) > 1e-8) v.fail("exact recovery");

  drsub::Curve lo, hi;
  for (int t = 1; t <= 100; ++t) {
    lo.t.push_back(t);
    hi.t.push_back(t);
    lo.value.push_back(0.9 - 1.0 / std::sqrt(t));
    hi.value.push_back(1.1 - 1.0 / std::sqrt(t));
  }
  const auto shared = drsub::shared_c1_refit({lo, hi});
  double worst = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& curve = k == 0 ? lo : hi;
    if (std::abs(shared[k].c1 - 1.0) > 1e-9) v.fail("shared c1 " + fmt(shared[k].c1));
    double best_c2 = 0.0, best_sse = 1e300;
    for (double c2 = -3.0; c2 <= 3.0; c2 += 1e-4) {
      double sse = 0.0;
      for (std::size_t i = 0; i < curve.t.size(); ++i) {
        const double r = curve.value[i] - (1.0 - c2 / std::sqrt(curve.t[i]));
        sse += r * r;
      }
      if (sse < best_sse) {
        best_sse = sse;
        best_c2 = c2;
      }
    }
    worst = std::max(worst, std::abs(shared[k].c2 - best_c2));
  }
  if (worst > 1e-4) v.fail("shared-c1 refit vs grid " + fmt(worst));
  if (v.pass) v.detail = "exact (c1,c2) err " + fmt(std::max(std::abs(fit.c1 - 1), std::abs(fit.c2 - 2))) +
                         ", refit vs grid " + fmt(worst);
  return v;
}

}  // namespace suites
