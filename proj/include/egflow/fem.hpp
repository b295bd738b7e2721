#pragma once

#include "egflow/common.hpp"
#include "egflow/mesh.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace egflow {

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

enum class QuadratureKind { Cell, Edge };

/// Tensor Gauss-Legendre rule on [-1,1] (edge) or [-1,1]^2 (cell). Edge points
/// store the coordinate in x() and zero in y().
struct QuadratureRule {
  std::vector<Vec2> points;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
};

inline constexpr int kMaxQuadratureDegree = 13;

/// n-point Gauss-Legendre nodes and weights on [-1, 1].
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

inline QuadratureRule quadrature_rule(QuadratureKind kind, int degree) {
  require(degree >= 1 && degree <= kMaxQuadratureDegree, "quadrature: unsupported degree");
  const int n = (degree + 2) / 2;
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  QuadratureRule rule;
  if (kind == QuadratureKind::Edge) {
    for (int i = 0; i < n; ++i) {
      rule.points.emplace_back(x[i], 0.0);
      rule.weights.push_back(w[i]);
    }
  } else {
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        rule.points.emplace_back(x[i], x[j]);
        rule.weights.push_back(w[i] * w[j]);
      }
  }
  return rule;
}

// ---------------------------------------------------------------------------
// Q1 basis on [-1,1]^2, vertices (-1,-1), (1,-1), (1,1), (-1,1)
// ---------------------------------------------------------------------------

namespace q1 {

inline constexpr std::array<double, 4> kXi = {-1.0, 1.0, 1.0, -1.0};
inline constexpr std::array<double, 4> kEta = {-1.0, -1.0, 1.0, 1.0};

inline std::array<double, 4> values(const Vec2& r) {
  std::array<double, 4> n{};
  for (int i = 0; i < 4; ++i) n[i] = 0.25 * (1.0 + kXi[i] * r.x()) * (1.0 + kEta[i] * r.y());
  return n;
}

inline std::array<Vec2, 4> ref_gradients(const Vec2& r) {
  std::array<Vec2, 4> g;
  for (int i = 0; i < 4; ++i)
    g[i] = Vec2(0.25 * kXi[i] * (1.0 + kEta[i] * r.y()), 0.25 * kEta[i] * (1.0 + kXi[i] * r.x()));
  return g;
}

/// Reference coordinates of the point at parameter t in [0,1] along local edge j,
/// traversed counterclockwise from local vertex (j+1)%4 to (j+2)%4.
inline Vec2 edge_point(int j, double t) {
  const int a = (j + 1) % 4;
  const int b = (j + 2) % 4;
  return Vec2((1.0 - t) * kXi[a] + t * kXi[b], (1.0 - t) * kEta[a] + t * kEta[b]);
}

}  // namespace q1

// ---------------------------------------------------------------------------
// Bilinear cell geometry
// ---------------------------------------------------------------------------

struct MappedPoint {
  Vec2 x;
  Mat2 jacobian;  // d x / d ref
  double det = 0.0;
};

class CellGeometry {
 public:
  explicit CellGeometry(const std::array<Vec2, 4>& vertices) : x_(vertices) {}
  CellGeometry(const Mesh& mesh, int cell) : x_(mesh.cell_vertices(cell)) {}

  const std::array<Vec2, 4>& vertices() const { return x_; }

  Vec2 point(const Vec2& r) const {
    const auto n = q1::values(r);
    return n[0] * x_[0] + n[1] * x_[1] + n[2] * x_[2] + n[3] * x_[3];
  }

  Mat2 jacobian(const Vec2& r) const {
    const auto g = q1::ref_gradients(r);
    Mat2 j = Mat2::Zero();
    for (int i = 0; i < 4; ++i) j += x_[i] * g[i].transpose();
    return j;
  }

  MappedPoint map(const Vec2& r) const {
    MappedPoint m{point(r), jacobian(r), 0.0};
    m.det = m.jacobian.determinant();
    if (!(m.det > 0.0)) throw Error("cell map: non-positive Jacobian determinant");
    return m;
  }

  /// Newton inversion of the bilinear map; throws when the point lies outside.
  Vec2 inverse(const Vec2& x, double tol = 1e-13, int max_steps = 30) const {
    Vec2 r = Vec2::Zero();
    const double scale = std::max((x_[2] - x_[0]).norm(), (x_[3] - x_[1]).norm());
    bool converged = false;
    for (int it = 0; it < max_steps; ++it) {
      const Vec2 residual = point(r) - x;
      if (residual.norm() <= tol * scale) {
        converged = true;
        break;
      }
      r -= jacobian(r).partialPivLu().solve(residual);
      if (!r.allFinite()) break;
    }
    if (!converged) throw Error("inverse map: Newton iteration did not converge");
    // looser than contains() so that every point it accepts maps back
    const double slack = 1e-8;
    if (std::abs(r.x()) > 1.0 + slack || std::abs(r.y()) > 1.0 + slack)
      throw Error("inverse map: point lies outside the cell");
    return r.cwiseMax(-1.0).cwiseMin(1.0);
  }

  bool contains(const Vec2& x, double slack = 1e-10) const {
    for (int i = 0; i < 4; ++i) {
      const Vec2 d = x_[(i + 1) % 4] - x_[i];
      if (cross(d, x - x_[i]) < -slack * d.squaredNorm()) return false;
    }
    return true;
  }

 private:
  std::array<Vec2, 4> x_;
};

inline MappedPoint map_to_physical(const Mesh& mesh, int cell, const Vec2& ref) {
  require(cell >= 0 && cell < mesh.num_cells(), "map_to_physical: invalid cell");
  require(std::abs(ref.x()) <= 1.0 + 1e-12 && std::abs(ref.y()) <= 1.0 + 1e-12,
          "map_to_physical: reference point outside [-1,1]^2");
  return CellGeometry(mesh, cell).map(ref);
}

/// Geometry and Q1 data at one quadrature point of a cell.
struct CellPoint {
  Vec2 ref;
  Vec2 x;
  double jxw = 0.0;
  Mat2 jacobian;
  std::array<double, 4> shape{};
  std::array<Vec2, 4> grad{};  // physical gradients
};

inline CellPoint cell_point(const CellGeometry& geo, const Vec2& ref, double weight = 0.0) {
  CellPoint p;
  p.ref = ref;
  const MappedPoint m = geo.map(ref);
  p.x = m.x;
  p.jacobian = m.jacobian;
  p.jxw = weight * m.det;
  p.shape = q1::values(ref);
  const Mat2 jinv_t = m.jacobian.inverse().transpose();
  const auto g = q1::ref_gradients(ref);
  for (int i = 0; i < 4; ++i) p.grad[i] = jinv_t * g[i];
  return p;
}

inline std::vector<CellPoint> cell_points(const Mesh& mesh, int cell, const QuadratureRule& rule) {
  const CellGeometry geo(mesh, cell);
  std::vector<CellPoint> pts;
  pts.reserve(rule.size());
  for (std::size_t q = 0; q < rule.size(); ++q) pts.push_back(cell_point(geo, rule.points[q], rule.weights[q]));
  return pts;
}

// ---------------------------------------------------------------------------
// Degrees of freedom and discrete fields
// ---------------------------------------------------------------------------

/// Global numbering. Velocity: [cg (2 per vertex, interleaved) | dg (1 per cell)];
/// the fluid system appends one pressure dof per cell; temperature uses vertices.
struct DofMap {
  int num_vertices = 0;
  int num_cells = 0;

  explicit DofMap(const Mesh& mesh) : num_vertices(mesh.num_vertices()), num_cells(mesh.num_cells()) {}

  int cg(int vertex, int component) const { return 2 * vertex + component; }
  int dg(int cell) const { return 2 * num_vertices + cell; }
  int pressure(int cell) const { return num_velocity() + cell; }
  int temperature(int vertex) const { return vertex; }

  int num_cg() const { return 2 * num_vertices; }
  int num_velocity() const { return 2 * num_vertices + num_cells; }
  int num_pressure() const { return num_cells; }
  int num_fluid() const { return num_velocity() + num_cells; }
  int num_temperature() const { return num_vertices; }
};

/// Enriched Galerkin velocity: continuous Q1 part plus c_T (x - x_T) per cell.
struct EGVelocityField {
  Vector cg;
  Vector dg;

  EGVelocityField() = default;
  explicit EGVelocityField(const Mesh& mesh)
      : cg(Vector::Zero(2 * mesh.num_vertices())), dg(Vector::Zero(mesh.num_cells())) {}

  Vector packed() const {
    Vector v(cg.size() + dg.size());
    v << cg, dg;
    return v;
  }

  static EGVelocityField from_packed(const Mesh& mesh, const Eigen::Ref<const Vector>& v) {
    EGVelocityField f;
    f.cg = v.head(2 * mesh.num_vertices());
    f.dg = v.segment(2 * mesh.num_vertices(), mesh.num_cells());
    return f;
  }
};

struct State {
  EGVelocityField velocity;
  Vector pressure;
  Vector temperature;
  double time = 0.0;

  State() = default;
  explicit State(const Mesh& mesh)
      : velocity(mesh), pressure(Vector::Zero(mesh.num_cells())), temperature(Vector::Zero(mesh.num_vertices())) {}
};

/// Values of the EG field at a quadrature point of cell c.
inline Vec2 eg_value(const Mesh& mesh, const EGVelocityField& u, int c, const CellPoint& p) {
  const auto& cv = mesh.cell(c);
  Vec2 v = u.dg[c] * (p.x - mesh.centroid(c));
  for (int i = 0; i < 4; ++i) v += p.shape[i] * Vec2(u.cg[2 * cv[i]], u.cg[2 * cv[i] + 1]);
  return v;
}

/// Gradient (row = component) of the EG field at a point of cell c.
inline Mat2 eg_gradient(const Mesh& mesh, const EGVelocityField& u, int c, const CellPoint& p) {
  const auto& cv = mesh.cell(c);
  Mat2 g = u.dg[c] * Mat2::Identity();
  for (int i = 0; i < 4; ++i) g += Vec2(u.cg[2 * cv[i]], u.cg[2 * cv[i] + 1]) * p.grad[i].transpose();
  return g;
}

inline Vec2 evaluate_eg_ref(const Mesh& mesh, const EGVelocityField& u, int c, const Vec2& ref) {
  return eg_value(mesh, u, c, cell_point(CellGeometry(mesh, c), ref));
}

/// EG velocity at a physical point inside cell c.
inline Vec2 evaluate_eg(const Mesh& mesh, const EGVelocityField& u, int c, const Vec2& x) {
  require(c >= 0 && c < mesh.num_cells(), "evaluate_eg: invalid cell");
  const CellGeometry geo(mesh, c);
  return eg_value(mesh, u, c, cell_point(geo, geo.inverse(x)));
}

inline double q1_value(const Mesh& mesh, const Vector& nodal, int c, const CellPoint& p) {
  const auto& cv = mesh.cell(c);
  double v = 0.0;
  for (int i = 0; i < 4; ++i) v += p.shape[i] * nodal[cv[i]];
  return v;
}

inline Vec2 q1_gradient(const Mesh& mesh, const Vector& nodal, int c, const CellPoint& p) {
  const auto& cv = mesh.cell(c);
  Vec2 g = Vec2::Zero();
  for (int i = 0; i < 4; ++i) g += nodal[cv[i]] * p.grad[i];
  return g;
}

// ---------------------------------------------------------------------------
// Edge traces
// ---------------------------------------------------------------------------

/// Reference coordinates in cell c of the point at parameter t along edge e
/// (t measured from edge.vertices[0]).
inline Vec2 edge_ref_point(const Mesh& mesh, int c, int e, double t) {
  const int j = mesh.local_edge(c, e);
  return q1::edge_point(j, mesh.edge(e).plus == c ? t : 1.0 - t);
}

inline Vec2 edge_point(const Mesh& mesh, int e, double t) {
  const Edge& ed = mesh.edge(e);
  return (1.0 - t) * mesh.vertex(ed.vertices[0]) + t * mesh.vertex(ed.vertices[1]);
}

struct EdgeTrace {
  Vec2 jump = Vec2::Zero();
  Vec2 average = Vec2::Zero();
};

/// Jump (plus minus minus) and average of an EG field at parameter t on edge e.
/// On boundary edges the average is the one-sided trace and the jump is the trace.
inline EdgeTrace edge_trace(const Mesh& mesh, const EGVelocityField& u, int e, double t) {
  require(e >= 0 && e < mesh.num_edges(), "edge_trace: invalid edge");
  const Edge& ed = mesh.edge(e);
  const Vec2 plus = evaluate_eg_ref(mesh, u, ed.plus, edge_ref_point(mesh, ed.plus, e, t));
  if (ed.is_boundary()) return {plus, plus};
  const Vec2 minus = evaluate_eg_ref(mesh, u, ed.minus, edge_ref_point(mesh, ed.minus, e, t));
  return {plus - minus, 0.5 * (plus + minus)};
}

/// Trace at a physical point on the edge.
inline EdgeTrace edge_trace_at(const Mesh& mesh, const EGVelocityField& u, int e, const Vec2& x) {
  const Edge& ed = mesh.edge(e);
  const Vec2 a = mesh.vertex(ed.vertices[0]);
  const Vec2 d = mesh.vertex(ed.vertices[1]) - a;
  const double t = (x - a).dot(d) / d.squaredNorm();
  require(t >= -1e-12 && t <= 1.0 + 1e-12 && std::abs(cross(d, x - a)) <= 1e-10 * d.squaredNorm(),
          "edge_trace: point is not on the edge");
  return edge_trace(mesh, u, e, t);
}

/// Nodal interpolation of a vector function into the CG part (zero enrichment).
inline EGVelocityField interpolate_eg(const Mesh& mesh, const VectorFn& f, double t) {
  EGVelocityField u(mesh);
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const Vec2 val = f(mesh.vertex(v), t);
    u.cg[2 * v] = val.x();
    u.cg[2 * v + 1] = val.y();
  }
  return u;
}

inline Vector interpolate_q1(const Mesh& mesh, const ScalarFn& f, double t) {
  Vector th(mesh.num_vertices());
  for (int v = 0; v < mesh.num_vertices(); ++v) th[v] = f(mesh.vertex(v), t);
  return th;
}

// ---------------------------------------------------------------------------
// Point location
// ---------------------------------------------------------------------------

/// Uniform bucket grid over the mesh bounding box.
class PointLocator {
 public:
  explicit PointLocator(const Mesh& mesh) : mesh_(&mesh) {
    lo_ = hi_ = mesh.vertex(0);
    for (const auto& v : mesh.vertices()) {
      lo_ = lo_.cwiseMin(v);
      hi_ = hi_.cwiseMax(v);
    }
    n_ = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.num_cells()))));
    buckets_.assign(static_cast<std::size_t>(n_) * n_, {});
    for (int c = 0; c < mesh.num_cells(); ++c) {
      Vec2 clo = mesh.vertex(mesh.cell(c)[0]), chi = clo;
      for (int v : mesh.cell(c)) {
        clo = clo.cwiseMin(mesh.vertex(v));
        chi = chi.cwiseMax(mesh.vertex(v));
      }
      const auto [i0, j0] = bucket(clo);
      const auto [i1, j1] = bucket(chi);
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) buckets_[j * n_ + i].push_back(c);
    }
  }

  /// All cells containing x (several when x lies on an edge or vertex).
  std::vector<int> find_all(const Vec2& x) const {
    std::vector<int> out;
    const auto [i, j] = bucket(x);
    for (int c : buckets_[j * n_ + i])
      if (CellGeometry(*mesh_, c).contains(x)) out.push_back(c);
    return out;
  }

 private:
  std::pair<int, int> bucket(const Vec2& x) const {
    const Vec2 s = (x - lo_).cwiseQuotient((hi_ - lo_).cwiseMax(Vec2::Constant(1e-300)));
    auto clampi = [this](double v) { return std::clamp(static_cast<int>(v * n_), 0, n_ - 1); };
    return {clampi(s.x()), clampi(s.y())};
  }

  const Mesh* mesh_;
  Vec2 lo_, hi_;
  int n_ = 1;
  std::vector<std::vector<int>> buckets_;
};

/// Average of the EG values over all cells containing x.
inline Vec2 probe_eg(const Mesh& mesh, const PointLocator& locator, const EGVelocityField& u, const Vec2& x) {
  const auto cells = locator.find_all(x);
  require(!cells.empty(), "probe: point outside the mesh");
  Vec2 sum = Vec2::Zero();
  for (int c : cells) sum += evaluate_eg(mesh, u, c, x);
  return sum / static_cast<double>(cells.size());
}

}  // namespace egflow
