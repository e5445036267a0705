#include <gtest/gtest.h>

#include "drsub/geometry.hpp"
#include "drsub/rng.hpp"
#include "oracles.hpp"

using drsub::Index;
using drsub::Matrix;
using drsub::Polytope;
using drsub::Vector;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Polytope unit_box(Index n) { return Polytope::box(Vector::Ones(n)); }

Polytope simplex2() {
  Matrix a(1, 2);
  a << 1, 1;
  return Polytope(a, vec({1}), vec({1, 1}));
}

Polytope random_polytope(drsub::Rng& rng, Index n, Index m) {
  Matrix a(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = rng.uniform(0.0, 1.0);
  Vector b(m), u(n);
  for (Index i = 0; i < m; ++i) b(i) = rng.uniform(0.3, 1.5);
  for (Index j = 0; j < n; ++j) u(j) = rng.uniform(0.2, 2.0);
  return Polytope(a, b, u);
}

}  // namespace

TEST(Contains, InteriorPointOfBox) { EXPECT_TRUE(unit_box(2).contains(vec({0.5, 0.5}), 0.0)); }

TEST(Contains, BoxViolation) { EXPECT_FALSE(unit_box(2).contains(vec({1.0 + 1e-3, 0.0}), 1e-6)); }

TEST(Contains, HalfspaceViolation) { EXPECT_FALSE(simplex2().contains(vec({0.6, 0.6}), 1e-6)); }

TEST(Contains, DimensionMismatchThrows) {
  EXPECT_THROW(unit_box(2).contains(vec({0.5})), drsub::ValidationError);
}

TEST(PolytopeInvariants, RejectsNonPositiveUpperOrB) {
  EXPECT_THROW(Polytope::box(vec({1, 0})), drsub::ValidationError);
  Matrix a(1, 2);
  a << 1, 1;
  EXPECT_THROW(Polytope(a, vec({0}), vec({1, 1})), drsub::ValidationError);
  EXPECT_THROW(Polytope(a, vec({1, 2}), vec({1, 1})), drsub::ValidationError);
}

TEST(Project, FixedPointIsReturnedExactly) {
  const Vector y = vec({0.5});
  EXPECT_EQ(unit_box(1).project(y), y);
  const Vector z = vec({0.3, 0.2});
  EXPECT_EQ(simplex2().project(z), z);
}

TEST(Project, BoxClamp) {
  const Vector x = unit_box(2).project(vec({2, -1}));
  EXPECT_EQ(x, vec({1, 0}));
}

TEST(Project, HalfspaceCornerMatchesGridOracle) {
  const auto p = simplex2();
  const Vector y = vec({1, 1});
  const Vector x = p.project(y);
  EXPECT_NEAR(x(0), 0.5, 1e-7);
  EXPECT_NEAR(x(1), 0.5, 1e-7);
  const Vector grid = oracle::grid_project_2d(p, y, 1e-3);
  EXPECT_NEAR((x - grid).norm(), 0.0, 2e-3);
}

TEST(Project, GridOracleOnOffCenterPoints) {
  drsub::Rng rng(11);
  Matrix a(2, 2);
  a << 1, 2, 3, 1;
  const Polytope p(a, vec({2, 3}), vec({1, 1.5}));
  for (int k = 0; k < 20; ++k) {
    const Vector y = vec({rng.uniform(-1, 3), rng.uniform(-1, 3)});
    const Vector x = p.project(y);
    const Vector grid = oracle::grid_project_2d(p, y, 2e-3);
    EXPECT_LE((x - y).norm(), (grid - y).norm() + 1e-6);
    EXPECT_NEAR((x - grid).norm(), 0.0, 5e-3);
  }
}

TEST(Project, OptimalityCertificateBySampling) {
  drsub::Rng rng(2024);
  for (int inst = 0; inst < 10; ++inst) {
    const Index n = 2 + inst % 4;
    const auto p = random_polytope(rng, n, 1 + inst % 3);
    std::vector<Vector> feasible;
    for (int k = 0; k < 100; ++k) feasible.push_back(oracle::feasible_point(p, rng));
    for (int k = 0; k < 100; ++k) {
      Vector y(n);
      for (Index j = 0; j < n; ++j) y(j) = rng.uniform(-2.0, 2.0) * p.upper()(j);
      const Vector x = p.project(y);
      ASSERT_TRUE(p.contains(x, 1e-6));
      const double d = (x - y).norm();
      for (const auto& f : feasible) ASSERT_LE(d, (f - y).norm() + 1e-6);
      EXPECT_LE((p.project(x) - x).norm(), 1e-8);
    }
  }
}

TEST(Project, NonConvergenceCarriesLastIterate) {
  Matrix a(2, 3);
  a << 1, 2, 0.5, 0.3, 1, 2;
  const Polytope p(a, vec({1, 1}), vec({1, 1, 1}));
  try {
    (void)p.project(vec({5, 5, 5}), 1e-14, 1, drsub::ProjectionMethod::kDykstra);
    FAIL() << "expected ProjectionError";
  } catch (const drsub::ProjectionError& e) {
    EXPECT_EQ(e.last_iterate().size(), 3);
    EXPECT_GT(e.residual(), 0.0);
  }
  EXPECT_THROW(p.project(vec({5, 5, 5}), 1e-8, 1), drsub::ProjectionError);
}

TEST(Project, ActiveSetAgreesWithDykstra) {
  drsub::Rng rng(77);
  for (int inst = 0; inst < 20; ++inst) {
    const Index n = 2 + inst % 6;
    const auto p = random_polytope(rng, n, 1 + inst % 4);
    for (int k = 0; k < 50; ++k) {
      Vector y(n);
      for (Index j = 0; j < n; ++j) y(j) = rng.uniform(-3.0, 3.0) * p.upper()(j);
      const Vector a = p.project(y);
      const Vector d = p.project(y, 1e-12, 1000000, drsub::ProjectionMethod::kDykstra);
      ASSERT_LE((a - d).norm(), 1e-7);
      ASSERT_LE(p.max_violation(a), 1e-12);
    }
  }
}

TEST(Project, FarExteriorPointOn100x50Instance) {
  drsub::Rng rng(5);
  Matrix a(50, 100);
  for (Index i = 0; i < 50; ++i)
    for (Index j = 0; j < 100; ++j) a(i, j) = rng.uniform();
  const Polytope p(a, Vector::Ones(50), Vector::Ones(100));
  for (int k = 0; k < 5; ++k) {
    Vector y(100);
    for (Index j = 0; j < 100; ++j) y(j) = rng.uniform(-500.0, 500.0);
    const Vector x = p.project(y);
    ASSERT_TRUE(p.contains(x, 1e-10));
    // Variational inequality at the projection: <y - x, z - x> <= 0 for feasible z.
    for (int s = 0; s < 200; ++s) {
      const Vector z = oracle::feasible_point(p, rng);
      ASSERT_LE((y - x).dot(z - x), 1e-8 * (1.0 + (y - x).norm()));
    }
  }
}

TEST(Lmo, NegativeDirectionSelectsOrigin) { EXPECT_EQ(unit_box(2).lmo(vec({-1, -1})), vec({0, 0})); }

TEST(Lmo, ZeroCoefficientRestsAtZero) { EXPECT_EQ(unit_box(2).lmo(vec({1, 0})), vec({1, 0})); }

TEST(Lmo, SimplexMatchesVertexEnumeration) {
  const auto p = simplex2();
  const Vector g = vec({2, 1});
  const Vector v = p.lmo(g);
  EXPECT_NEAR((v - vec({1, 0})).norm(), 0.0, 1e-12);
  double best = -1e300;
  for (const auto& w : oracle::enumerate_vertices(p)) best = std::max(best, g.dot(w));
  EXPECT_NEAR(g.dot(v), best, 1e-9);
}

TEST(Lmo, ZeroCoefficientRestsAtZeroWithConstraints) {
  const Vector v = simplex2().lmo(vec({1, 0}));
  EXPECT_EQ(v, vec({1, 0}));
  EXPECT_EQ(simplex2().lmo(vec({0, 0})), vec({0, 0}));
}

TEST(Lmo, RandomDirectionsMatchVertexEnumeration) {
  drsub::Rng rng(77);
  int checked = 0;
  for (int inst = 0; inst < 20; ++inst) {
    const Index n = 2 + inst % 3;
    const Index m = 1 + inst % 3;
    const auto p = random_polytope(rng, n, m);
    const auto vertices = oracle::enumerate_vertices(p);
    ASSERT_FALSE(vertices.empty());
    for (int k = 0; k < 50; ++k) {
      Vector g(n);
      for (Index j = 0; j < n; ++j) g(j) = rng.gaussian();
      const Vector v = p.lmo(g);
      ASSERT_TRUE(p.contains(v, 1e-9));
      std::size_t arg = 0;
      for (std::size_t i = 1; i < vertices.size(); ++i)
        if (g.dot(vertices[i]) > g.dot(vertices[arg])) arg = i;
      EXPECT_LE((v - vertices[arg]).norm(), 1e-9) << "instance " << inst << " direction " << k;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 1000);
}

TEST(Lmo, DeterministicForFixedInput) {
  drsub::Rng rng(5);
  const auto p = random_polytope(rng, 4, 3);
  const Vector g = vec({0.3, -0.1, 0.7, 0.2});
  EXPECT_EQ(p.lmo(g), p.lmo(g));
}

TEST(Lmo, FrankWolfeAveragingStaysFeasible) {
  drsub::Rng rng(99);
  const auto p = random_polytope(rng, 4, 3);
  const int T = 200;
  Vector x = Vector::Zero(4);
  for (int t = 0; t < T; ++t) {
    Vector g(4);
    for (Index j = 0; j < 4; ++j) g(j) = rng.gaussian();
    x += p.lmo(g) / T;
  }
  EXPECT_TRUE(p.contains(x, 1e-9));
}

TEST(Diameter, Examples) {
  EXPECT_NEAR(Polytope::box(Vector::Ones(5)).diameter_bound(), std::sqrt(5.0), 1e-15);
  EXPECT_DOUBLE_EQ(Polytope::box(vec({1})).diameter_bound(), 1.0);
  EXPECT_DOUBLE_EQ(Polytope::box(vec({3, 4})).diameter_bound(), 5.0);
}

TEST(Serialization, ExactRoundTrip) {
  drsub::Rng rng(3);
  const auto p = random_polytope(rng, 3, 2);
  const auto q = Polytope::parse(p.serialize());
  EXPECT_EQ(p.a(), q.a());
  EXPECT_EQ(p.b(), q.b());
  EXPECT_EQ(p.upper(), q.upper());
  EXPECT_EQ(p.serialize(), q.serialize());
}

TEST(Serialization, MalformedInputIsRejected) {
  EXPECT_THROW(Polytope::parse("polytope\nn 2\nm 0\nu 1\n"), drsub::ValidationError);
}
