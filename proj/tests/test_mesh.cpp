#include "egflow/mesh.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

using namespace egflow;

namespace {

int count_interior(const Mesh& m) {
  int n = 0;
  for (const auto& e : m.edges()) n += e.is_boundary() ? 0 : 1;
  return n;
}

double total_area(const Mesh& m) {
  double a = 0.0;
  for (int c = 0; c < m.num_cells(); ++c) a += m.cell_area(c);
  return a;
}

void expect_invariants(const Mesh& m) {
  EXPECT_GT(m.min_vertex_jacobian(), 0.0);
  std::vector<int> incidence(m.num_edges(), 0);
  for (int c = 0; c < m.num_cells(); ++c)
    for (int e : m.cell_edges(c)) ++incidence[e];
  for (int e = 0; e < m.num_edges(); ++e) {
    const Edge& ed = m.edge(e);
    EXPECT_EQ(incidence[e], ed.is_boundary() ? 1 : 2);
    EXPECT_NEAR(ed.normal.norm(), 1.0, 1e-14);
    EXPECT_GT(ed.length, 0.0);
    const Vec2 mid = 0.5 * (m.vertex(ed.vertices[0]) + m.vertex(ed.vertices[1]));
    // normal points away from the plus cell
    EXPECT_GT(ed.normal.dot(mid - m.centroid(ed.plus)), 0.0);
    if (!ed.is_boundary()) {
      EXPECT_LT(ed.plus, ed.minus);
      EXPECT_LT(ed.normal.dot(mid - m.centroid(ed.minus)), 0.0);
      EXPECT_EQ(m.edge_sign(ed.plus, e), 1.0);
      EXPECT_EQ(m.edge_sign(ed.minus, e), -1.0);
    } else {
      EXPECT_GE(ed.tag, 0);
    }
  }
}

}  // namespace

TEST(UniformMesh, CountsFor2x2) {
  const Mesh m = build_uniform_quad_mesh(2, 2);
  EXPECT_EQ(m.num_cells(), 4);
  EXPECT_EQ(m.num_vertices(), 9);
  EXPECT_EQ(m.num_edges(), 12);
  EXPECT_EQ(count_interior(m), 4);
  expect_invariants(m);
}

TEST(UniformMesh, SingleCellCentroid) {
  const Mesh m = build_uniform_quad_mesh(1, 1);
  EXPECT_EQ(m.num_cells(), 1);
  EXPECT_NEAR(m.centroid(0).x(), 0.5, 1e-15);
  EXPECT_NEAR(m.centroid(0).y(), 0.5, 1e-15);
}

TEST(UniformMesh, CountIdentityAndArea) {
  for (auto [nx, ny] : {std::pair{3, 5}, std::pair{7, 2}, std::pair{16, 16}}) {
    const Mesh m = build_uniform_quad_mesh(nx, ny, Rectangle{Vec2(-1.0, 0.5), Vec2(2.0, 1.5)});
    EXPECT_EQ(m.num_cells(), nx * ny);
    EXPECT_EQ(m.num_vertices(), (nx + 1) * (ny + 1));
    EXPECT_EQ(m.num_edges(), nx * (ny + 1) + ny * (nx + 1));
    EXPECT_NEAR(total_area(m), 3.0, 1e-12);
    expect_invariants(m);
  }
}

TEST(UniformMesh, Benchmark128) {
  const Mesh m = build_uniform_quad_mesh(128, 128);
  EXPECT_EQ(m.num_cells(), 128 * 128);
  EXPECT_NEAR(m.edge(0).length, 1.0 / 128, 1e-15);
}

TEST(UniformMesh, RejectsBadCounts) {
  EXPECT_THROW(build_uniform_quad_mesh(0, 2), Error);
  EXPECT_THROW(build_uniform_quad_mesh(2, -1), Error);
}

TEST(UniformMesh, BoundaryLabels) {
  const Mesh m = build_uniform_quad_mesh(4, 4);
  std::set<std::string> labels;
  for (int e = 0; e < m.num_edges(); ++e) {
    if (!m.edge(e).is_boundary()) continue;
    const std::string& l = m.edge_tag(e).label;
    labels.insert(l);
    const Vec2 n = m.edge(e).normal;
    if (l == "left") EXPECT_NEAR(n.x(), -1.0, 1e-15);
    if (l == "right") EXPECT_NEAR(n.x(), 1.0, 1e-15);
    if (l == "bottom") EXPECT_NEAR(n.y(), -1.0, 1e-15);
    if (l == "top") EXPECT_NEAR(n.y(), 1.0, 1e-15);
  }
  EXPECT_EQ(labels, (std::set<std::string>{"bottom", "right", "top", "left"}));
}

TEST(TrapezoidMesh, ZeroDistortionIsUniform) {
  const Mesh a = build_trapezoid_mesh(2, 2, 0.0);
  const Mesh b = build_uniform_quad_mesh(2, 2);
  ASSERT_EQ(a.num_vertices(), b.num_vertices());
  for (int v = 0; v < a.num_vertices(); ++v) EXPECT_EQ(a.vertex(v), b.vertex(v));
  EXPECT_EQ(a.cells(), b.cells());
}

TEST(TrapezoidMesh, ConvexAtModerateDistortion) {
  const Mesh m = build_trapezoid_mesh(4, 4, 0.3);
  EXPECT_EQ(m.num_cells(), 16);
  // direct evaluation of the bilinear Jacobian at the four vertices of each cell
  for (int c = 0; c < m.num_cells(); ++c) {
    const auto x = m.cell_vertices(c);
    for (int i = 0; i < 4; ++i) {
      const Vec2 a = x[(i + 1) % 4] - x[i];
      const Vec2 b = x[(i + 3) % 4] - x[i];
      EXPECT_GT(a.x() * b.y() - a.y() * b.x(), 0.0);
    }
  }
  expect_invariants(m);
  EXPECT_NEAR(total_area(m), 1.0, 1e-12);
}

TEST(TrapezoidMesh, CellsAreTrapezoids) {
  const Mesh m = build_trapezoid_mesh(8, 8, 0.3);
  for (int c = 0; c < m.num_cells(); ++c) {
    const auto x = m.cell_vertices(c);
    // vertical sides stay vertical, so the pair of left/right edges is parallel
    EXPECT_NEAR(x[1].x(), x[2].x(), 1e-15);
    EXPECT_NEAR(x[0].x(), x[3].x(), 1e-15);
    EXPECT_NEAR(x[2].y() - x[1].y(), 1.0 / 8, 0.3 / 8 * 2 + 1e-15);
  }
  const Mesh fine = build_trapezoid_mesh(16, 16, 0.3);
  EXPECT_EQ(fine.num_cells(), 256);
  expect_invariants(fine);
  // shifted vertex: odd column, interior row
  EXPECT_NEAR(m.vertex(1 * 9 + 1).y(), 1.0 / 8 - 0.3 / 8, 1e-15);
  EXPECT_NEAR(m.vertex(2 * 9 + 1).y(), 2.0 / 8 + 0.3 / 8, 1e-15);
  EXPECT_NEAR(m.vertex(2 * 9 + 2).y(), 2.0 / 8, 1e-15);
}

TEST(TrapezoidMesh, RejectsDistortionOutOfRange) {
  EXPECT_THROW(build_trapezoid_mesh(4, 4, 0.5), Error);
  EXPECT_THROW(build_trapezoid_mesh(4, 4, -0.1), Error);
}

TEST(PoreMesh, NoHolesIsUniform) {
  const Mesh a = build_pore_mesh(6, 6, {});
  const Mesh b = build_uniform_quad_mesh(6, 6);
  EXPECT_EQ(a.cells(), b.cells());
  EXPECT_EQ(a.num_vertices(), b.num_vertices());
}

TEST(PoreMesh, HoleVerticesLieOnCircle) {
  const Hole h{Vec2(0.5, 0.5), 0.15};
  const Mesh m = build_pore_mesh(32, 32, {h});
  int on_circle = 0;
  std::set<int> pore_vertices;
  for (int e = 0; e < m.num_edges(); ++e)
    if (m.edge(e).is_boundary() && m.edge_tag(e).label == "pore")
      for (int v : m.edge(e).vertices) pore_vertices.insert(v);
  for (int v : pore_vertices) {
    EXPECT_NEAR((m.vertex(v) - h.center).norm(), h.radius, 1e-12);
    ++on_circle;
  }
  EXPECT_GT(on_circle, 8);
  expect_invariants(m);
  const double area = 1.0 - std::numbers::pi * h.radius * h.radius;
  EXPECT_NEAR(total_area(m), area, 0.01 * area);
}

TEST(PoreMesh, DefaultLayoutTagsPores) {
  const auto holes = default_pore_layout();
  ASSERT_EQ(holes.size(), 9u);
  const Mesh m = build_pore_mesh(64, 64, holes).with_conditions("pore", FluidBc::Dirichlet, HeatBc::Neumann);
  expect_invariants(m);
  int pore_edges = 0;
  for (int e = 0; e < m.num_edges(); ++e)
    if (m.edge(e).is_boundary() && m.edge_tag(e).label == "pore") {
      ++pore_edges;
      EXPECT_EQ(m.edge_tag(e).heat, HeatBc::Neumann);
      EXPECT_EQ(m.edge_tag(e).fluid, FluidBc::Dirichlet);
    }
  EXPECT_GT(pore_edges, 9 * 8);
  const double area = 1.0 - 9 * std::numbers::pi * 0.01;
  EXPECT_NEAR(total_area(m), area, 0.01 * area);
}

TEST(PoreMesh, RejectsInvalidHoles) {
  EXPECT_THROW(build_pore_mesh(16, 16, {Hole{Vec2(0.05, 0.5), 0.1}}), Error);
  EXPECT_THROW(build_pore_mesh(16, 16, {Hole{Vec2(0.4, 0.5), 0.1}, Hole{Vec2(0.55, 0.5), 0.1}}), Error);
}

TEST(Mesh, RejectsNonConvexCell) {
  std::vector<Vec2> v{{0, 0}, {1, 0}, {0.3, 0.3}, {0, 1}};
  EXPECT_THROW(Mesh(v, {{0, 1, 2, 3}}, {}), Error);
}

TEST(Mesh, TextRoundTrip) {
  const Mesh m = build_trapezoid_mesh(3, 2, 0.2);
  std::stringstream s;
  write_mesh(s, m);
  const Mesh r = read_mesh(s);
  EXPECT_EQ(r.num_vertices(), m.num_vertices());
  EXPECT_EQ(r.cells(), m.cells());
  EXPECT_EQ(r.num_edges(), m.num_edges());
  for (int v = 0; v < m.num_vertices(); ++v) EXPECT_NEAR((r.vertex(v) - m.vertex(v)).norm(), 0.0, 1e-15);
  for (int e = 0; e < m.num_edges(); ++e)
    if (m.edge(e).is_boundary()) EXPECT_EQ(r.edge_tag(e).label, m.edge_tag(e).label);
}

TEST(Mesh, MalformedTextRejected) {
  std::stringstream s("vertices 2\n0 0\n1 1\ncells x\n");
  EXPECT_THROW(read_mesh(s), Error);
}

TEST(Mesh, AreaOfRandomPerturbedMeshes) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int trial = 0; trial < 5; ++trial) {
    const Mesh base = build_uniform_quad_mesh(6, 6);
    std::vector<Vec2> v = base.vertices();
    for (int j = 1; j < 6; ++j)
      for (int i = 1; i < 6; ++i) v[j * 7 + i] += Vec2(u(rng), u(rng)) / 6.0;
    std::vector<BoundarySegment> b;
    for (int e = 0; e < base.num_edges(); ++e)
      if (base.edge(e).is_boundary())
        b.push_back({base.edge(e).vertices[0], base.edge(e).vertices[1], base.edge_tag(e).label});
    const Mesh m(v, base.cells(), b);
    expect_invariants(m);
    EXPECT_NEAR(total_area(m), 1.0, 1e-12);
  }
}
