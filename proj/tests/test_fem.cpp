#include "egflow/fem.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace egflow;

namespace {

// Random strictly convex quadrilateral: perturbed square, rejected until convex.
std::array<Vec2, 4> random_convex_quad(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-0.35, 0.35);
  std::uniform_real_distribution<double> s(0.2, 3.0);
  for (;;) {
    const double scale = s(rng);
    std::array<Vec2, 4> x{Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
    for (auto& p : x) p = scale * (p + Vec2(u(rng), u(rng))) + Vec2(u(rng), u(rng));
    bool convex = true;
    for (int i = 0; i < 4; ++i)
      if (cross(x[(i + 1) % 4] - x[i], x[(i + 3) % 4] - x[i]) <= 1e-3 * scale * scale) convex = false;
    if (convex) return x;
  }
}

}  // namespace

TEST(Quadrature, CellDegree3IsTwoByTwo) {
  const auto r = quadrature_rule(QuadratureKind::Cell, 3);
  ASSERT_EQ(r.size(), 4u);
  double sum = 0.0;
  for (double w : r.weights) {
    EXPECT_NEAR(w, 1.0, 1e-15);
    sum += w;
  }
  EXPECT_NEAR(sum, 4.0, 1e-14);
}

TEST(Quadrature, EdgeDegree3) {
  const auto r = quadrature_rule(QuadratureKind::Edge, 3);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_NEAR(std::abs(r.points[0].x()), 1.0 / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(r.points[0].x(), -r.points[1].x(), 1e-15);
  EXPECT_NEAR(r.weights[0], 1.0, 1e-15);
  EXPECT_NEAR(r.weights[1], 1.0, 1e-15);
}

TEST(Quadrature, XiSquaredEtaSquared) {
  const auto r = quadrature_rule(QuadratureKind::Cell, 5);
  double s = 0.0;
  for (std::size_t q = 0; q < r.size(); ++q)
    s += r.weights[q] * std::pow(r.points[q].x(), 2) * std::pow(r.points[q].y(), 2);
  EXPECT_NEAR(s, 4.0 / 9.0, 1e-14);
}

TEST(Quadrature, ExactnessUpToDegree) {
  for (int deg = 1; deg <= kMaxQuadratureDegree; ++deg) {
    const auto r = quadrature_rule(QuadratureKind::Edge, deg);
    double wsum = 0.0;
    for (double w : r.weights) wsum += w;
    EXPECT_NEAR(wsum, 2.0, 1e-14);
    for (int k = 0; k <= deg; ++k) {
      double s = 0.0;
      for (std::size_t q = 0; q < r.size(); ++q) s += r.weights[q] * std::pow(r.points[q].x(), k);
      const double exact = (k % 2 == 1) ? 0.0 : 2.0 / (k + 1);
      EXPECT_NEAR(s, exact, 1e-13) << "degree " << deg << " monomial " << k;
    }
  }
}

TEST(Quadrature, RejectsUnsupportedDegree) {
  EXPECT_THROW(quadrature_rule(QuadratureKind::Cell, 0), Error);
  EXPECT_THROW(quadrature_rule(QuadratureKind::Cell, kMaxQuadratureDegree + 1), Error);
}

TEST(Q1, PartitionOfUnityAndKronecker) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const auto n = q1::values(Vec2(u(rng), u(rng)));
    EXPECT_NEAR(n[0] + n[1] + n[2] + n[3], 1.0, 1e-14);
  }
  for (int i = 0; i < 4; ++i) {
    const auto n = q1::values(Vec2(q1::kXi[i], q1::kEta[i]));
    for (int j = 0; j < 4; ++j) EXPECT_EQ(n[j], i == j ? 1.0 : 0.0);
  }
}

TEST(CellMap, UnitSquareCenter) {
  const Mesh m = build_uniform_quad_mesh(1, 1);
  const auto mp = map_to_physical(m, 0, Vec2(0, 0));
  EXPECT_NEAR((mp.x - Vec2(0.5, 0.5)).norm(), 0.0, 1e-15);
  EXPECT_NEAR(mp.det, 0.25, 1e-15);
}

TEST(CellMap, Trapezoid) {
  const CellGeometry g({Vec2(0, 0), Vec2(2, 0), Vec2(1, 2), Vec2(0, 2)});
  EXPECT_NEAR((g.map(Vec2(0, 0)).x - Vec2(0.75, 1.0)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((g.map(Vec2(1, 1)).x - Vec2(1, 2)).norm(), 0.0, 1e-15);
}

TEST(CellMap, InvertedCellRejected) {
  const CellGeometry g({Vec2(0, 0), Vec2(0, 1), Vec2(1, 1), Vec2(1, 0)});
  EXPECT_THROW(g.map(Vec2(0, 0)), Error);
}

TEST(CellMap, InverseRoundTripOnRandomQuads) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-0.98, 0.98);
  for (int k = 0; k < 200; ++k) {
    const CellGeometry g(random_convex_quad(rng));
    for (int s = 0; s < 5; ++s) {
      const Vec2 r(u(rng), u(rng));
      const Vec2 back = g.inverse(g.point(r));
      EXPECT_NEAR((back - r).norm(), 0.0, 1e-12);
    }
  }
}

TEST(CellMap, InverseOutsideThrows) {
  const CellGeometry g({Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)});
  EXPECT_THROW(g.inverse(Vec2(1.5, 0.5)), Error);
}

TEST(DofMap, CountsAndBijection) {
  const Mesh m = build_uniform_quad_mesh(3, 2);
  const DofMap d(m);
  EXPECT_EQ(d.num_velocity(), 2 * 12 + 6);
  EXPECT_EQ(d.num_pressure(), 6);
  EXPECT_EQ(d.num_temperature(), 12);
  std::vector<int> seen(d.num_fluid(), 0);
  for (int v = 0; v < m.num_vertices(); ++v)
    for (int c = 0; c < 2; ++c) ++seen[d.cg(v, c)];
  for (int c = 0; c < m.num_cells(); ++c) {
    ++seen[d.dg(c)];
    ++seen[d.pressure(c)];
  }
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(EGField, ZeroField) {
  const Mesh m = build_uniform_quad_mesh(2, 2);
  const EGVelocityField u(m);
  EXPECT_EQ(evaluate_eg(m, u, 3, Vec2(0.7, 0.8)), Vec2::Zero());
}

TEST(EGField, EnrichmentOnly) {
  const Mesh m = build_uniform_quad_mesh(1, 1);
  EGVelocityField u(m);
  u.dg[0] = 2.0;
  EXPECT_NEAR((evaluate_eg(m, u, 0, Vec2(1, 1)) - Vec2(1, 1)).norm(), 0.0, 1e-14);
}

TEST(EGField, LinearFieldReproduced) {
  const Mesh m = build_trapezoid_mesh(4, 4, 0.3);
  const auto f = [](const Vec2& x, double) { return Vec2(x.y(), -x.x()); };
  const EGVelocityField u = interpolate_eg(m, f, 0.0);
  const auto rule = quadrature_rule(QuadratureKind::Cell, 5);
  for (int c = 0; c < m.num_cells(); ++c)
    for (const auto& p : cell_points(m, c, rule)) {
      EXPECT_NEAR((eg_value(m, u, c, p) - f(p.x, 0.0)).norm(), 0.0, 1e-14);
      const Mat2 g = eg_gradient(m, u, c, p);
      EXPECT_NEAR(g(0, 1), 1.0, 1e-13);
      EXPECT_NEAR(g(1, 0), -1.0, 1e-13);
      EXPECT_NEAR(g(0, 0), 0.0, 1e-13);
    }
}

TEST(EGField, EnrichmentHasZeroMean) {
  const Mesh m = build_trapezoid_mesh(4, 4, 0.3);
  EGVelocityField u(m);
  u.dg.setOnes();
  const auto rule = quadrature_rule(QuadratureKind::Cell, 5);
  for (int c = 0; c < m.num_cells(); ++c) {
    Vec2 s = Vec2::Zero();
    for (const auto& p : cell_points(m, c, rule)) s += p.jxw * eg_value(m, u, c, p);
    // the vertex average is the area centroid only for parallelograms
    const Vec2 centroid_shift = s / m.cell_area(c);
    EXPECT_LT(centroid_shift.norm(), 0.1 / 4);
  }
  const Mesh sq = build_uniform_quad_mesh(4, 4);
  EGVelocityField v(sq);
  v.dg.setOnes();
  for (int c = 0; c < sq.num_cells(); ++c) {
    Vec2 s = Vec2::Zero();
    for (const auto& p : cell_points(sq, c, rule)) s += p.jxw * eg_value(sq, v, c, p);
    EXPECT_NEAR(s.norm(), 0.0, 1e-15);
  }
}

TEST(EdgeTrace, ContinuousFieldHasNoJump) {
  const Mesh m = build_trapezoid_mesh(4, 4, 0.3);
  const EGVelocityField u =
      interpolate_eg(m, [](const Vec2& x, double) { return Vec2(std::sin(3 * x.x()), x.x() * x.y()); }, 0.0);
  for (int e = 0; e < m.num_edges(); ++e) {
    if (m.edge(e).is_boundary()) continue;
    for (double t : {0.1, 0.5, 0.887})
      EXPECT_NEAR(edge_trace(m, u, e, t).jump.norm(), 0.0, 1e-14);
  }
}

TEST(EdgeTrace, EnrichmentJumpAndAverage) {
  const Mesh m = build_uniform_quad_mesh(2, 1);
  int e = -1;
  for (int k = 0; k < m.num_edges(); ++k)
    if (!m.edge(k).is_boundary()) e = k;
  ASSERT_GE(e, 0);
  const Edge& ed = m.edge(e);
  EGVelocityField u(m);
  u.dg[ed.plus] = 1.0;
  const Vec2 x(0.5, 0.3);
  const auto tr = edge_trace_at(m, u, e, x);
  const Vec2 expected = x - m.centroid(ed.plus);
  EXPECT_NEAR((tr.jump - expected).norm(), 0.0, 1e-14);
  EXPECT_NEAR((tr.average - 0.5 * expected).norm(), 0.0, 1e-14);
}

TEST(EdgeTrace, BoundaryAverageIsTrace) {
  const Mesh m = build_uniform_quad_mesh(2, 2);
  EGVelocityField u = interpolate_eg(m, [](const Vec2& x, double) { return Vec2(x.x() + 1, 2 * x.y()); }, 0.0);
  u.dg.setConstant(0.7);
  for (int e = 0; e < m.num_edges(); ++e) {
    const Edge& ed = m.edge(e);
    if (!ed.is_boundary()) continue;
    const Vec2 x = edge_point(m, e, 0.3);
    const auto tr = edge_trace(m, u, e, 0.3);
    EXPECT_NEAR((tr.average - evaluate_eg(m, u, ed.plus, x)).norm(), 0.0, 1e-14);
  }
}

TEST(PointLocator, FindsContainingCells) {
  const Mesh m = build_trapezoid_mesh(8, 8, 0.3);
  const PointLocator loc(m);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const Vec2 x(u(rng), u(rng));
    const auto cells = loc.find_all(x);
    ASSERT_FALSE(cells.empty());
    for (int c : cells) EXPECT_TRUE(CellGeometry(m, c).contains(x));
  }
  EXPECT_EQ(loc.find_all(Vec2(0.5, 0.5)).size(), 4u);
}
