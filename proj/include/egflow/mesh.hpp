#pragma once

#include "egflow/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace egflow {

enum class FluidBc { Dirichlet, Neumann };
enum class HeatBc { Dirichlet, Neumann };

/// Boundary classification shared by all edges carrying the same label.
struct BoundaryTag {
  FluidBc fluid = FluidBc::Dirichlet;
  HeatBc heat = HeatBc::Dirichlet;
  std::string label;
};

/// Labelled boundary segment used when constructing a mesh.
struct BoundarySegment {
  int v0 = 0;
  int v1 = 0;
  std::string label;
};

struct Edge {
  /// Ordered counterclockwise with respect to the plus cell.
  std::array<int, 2> vertices{};
  int plus = -1;
  /// -1 for boundary edges.
  int minus = -1;
  /// Unit normal, from plus to minus (outward on the boundary).
  Vec2 normal = Vec2::Zero();
  double length = 0.0;
  /// Index into Mesh::tags(); -1 for interior edges.
  int tag = -1;

  bool is_boundary() const { return minus < 0; }
};

struct Hole {
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
};

/// Conforming quadrilateral mesh. Cells list their vertices counterclockwise;
/// local edge j of a cell joins local vertices (j+1)%4 and (j+2)%4, which is
/// the edge ordering used by the AC0 degrees of freedom.
class Mesh {
 public:
  Mesh() = default;

  Mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 4>> cells,
       const std::vector<BoundarySegment>& boundary)
      : vertices_(std::move(vertices)), cells_(std::move(cells)) {
    require(!cells_.empty(), "mesh: no cells");
    validate_cells();
    build_topology(boundary);
  }

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_cells() const { return static_cast<int>(cells_.size()); }
  int num_edges() const { return static_cast<int>(edges_.size()); }

  const std::vector<Vec2>& vertices() const { return vertices_; }
  const Vec2& vertex(int v) const { return vertices_[v]; }
  const std::vector<std::array<int, 4>>& cells() const { return cells_; }
  const std::array<int, 4>& cell(int c) const { return cells_[c]; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(int e) const { return edges_[e]; }
  const std::vector<Vec2>& centroids() const { return centroids_; }
  const Vec2& centroid(int c) const { return centroids_[c]; }
  const std::array<int, 4>& cell_edges(int c) const { return cell_edges_[c]; }
  const std::vector<BoundaryTag>& tags() const { return tags_; }

  std::array<Vec2, 4> cell_vertices(int c) const {
    const auto& cv = cells_[c];
    return {vertices_[cv[0]], vertices_[cv[1]], vertices_[cv[2]], vertices_[cv[3]]};
  }

  /// +1 when cell c is the plus cell of edge e (edge normal is outward for c).
  double edge_sign(int c, int e) const { return edges_[e].plus == c ? 1.0 : -1.0; }

  /// Local index (0..3) of edge e within cell c.
  int local_edge(int c, int e) const {
    const auto& ce = cell_edges_[c];
    for (int j = 0; j < 4; ++j)
      if (ce[j] == e) return j;
    throw Error("mesh: edge is not on cell");
  }

  const BoundaryTag& edge_tag(int e) const {
    require(edges_[e].tag >= 0, "mesh: edge has no boundary tag");
    return tags_[edges_[e].tag];
  }

  int find_tag(const std::string& label) const {
    for (std::size_t i = 0; i < tags_.size(); ++i)
      if (tags_[i].label == label) return static_cast<int>(i);
    return -1;
  }

  /// Copy of this mesh with the conditions of one labelled boundary replaced.
  Mesh with_conditions(const std::string& label, FluidBc fluid, HeatBc heat) const {
    const int t = find_tag(label);
    require(t >= 0, "mesh: unknown boundary label '" + label + "'");
    Mesh copy = *this;
    copy.tags_[t].fluid = fluid;
    copy.tags_[t].heat = heat;
    return copy;
  }

  bool has_fluid_neumann() const {
    for (const auto& e : edges_)
      if (e.is_boundary() && tags_[e.tag].fluid == FluidBc::Neumann) return true;
    return false;
  }

  /// Cell area by 2x2 Gauss quadrature of the bilinear Jacobian (exact).
  double cell_area(int c) const {
    const auto x = cell_vertices(c);
    const double g = 1.0 / std::sqrt(3.0);
    double area = 0.0;
    for (double xi : {-g, g})
      for (double eta : {-g, g}) area += jacobian_det(x, xi, eta);
    return area;
  }

  /// Longest diagonal.
  double cell_diameter(int c) const {
    const auto x = cell_vertices(c);
    return std::max((x[2] - x[0]).norm(), (x[3] - x[1]).norm());
  }

  double min_vertex_jacobian() const {
    double m = std::numeric_limits<double>::infinity();
    for (int c = 0; c < num_cells(); ++c) m = std::min(m, min_vertex_jacobian(c));
    return m;
  }

  double min_vertex_jacobian(int c) const {
    const auto x = cell_vertices(c);
    double m = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4; ++i) {
      const Vec2& p = x[i];
      m = std::min(m, 0.25 * cross(x[(i + 1) % 4] - p, x[(i + 3) % 4] - p));
    }
    return m;
  }

 private:
  static double jacobian_det(const std::array<Vec2, 4>& x, double xi, double eta) {
    const Vec2 dxi = 0.25 * ((1 - eta) * (x[1] - x[0]) + (1 + eta) * (x[2] - x[3]));
    const Vec2 deta = 0.25 * ((1 - xi) * (x[3] - x[0]) + (1 + xi) * (x[2] - x[1]));
    return cross(dxi, deta);
  }

  void validate_cells() const {
    const int nv = num_vertices();
    for (int c = 0; c < num_cells(); ++c) {
      for (int v : cells_[c]) require(v >= 0 && v < nv, "mesh: cell vertex index out of range");
      if (min_vertex_jacobian(c) <= 0.0)
        throw Error("mesh: cell " + std::to_string(c) + " is not strictly convex");
    }
  }

  static std::pair<int, int> key(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

  void build_topology(const std::vector<BoundarySegment>& boundary) {
    centroids_.resize(cells_.size());
    cell_edges_.resize(cells_.size());
    std::map<std::pair<int, int>, int> lookup;
    for (int c = 0; c < num_cells(); ++c) {
      const auto& cv = cells_[c];
      centroids_[c] = 0.25 * (vertices_[cv[0]] + vertices_[cv[1]] + vertices_[cv[2]] + vertices_[cv[3]]);
      for (int j = 0; j < 4; ++j) {
        const int a = cv[(j + 1) % 4];
        const int b = cv[(j + 2) % 4];
        auto [it, inserted] = lookup.try_emplace(key(a, b), num_edges());
        if (inserted) {
          Edge e;
          e.vertices = {a, b};
          e.plus = c;
          const Vec2 d = vertices_[b] - vertices_[a];
          e.length = d.norm();
          require(e.length > 0.0, "mesh: zero-length edge");
          e.normal = Vec2(d.y(), -d.x()) / e.length;
          edges_.push_back(e);
        } else {
          Edge& e = edges_[it->second];
          require(e.minus < 0, "mesh: edge shared by more than two cells");
          require(e.vertices[0] == b && e.vertices[1] == a, "mesh: inconsistent cell orientation");
          e.minus = c;
        }
        cell_edges_[c][j] = it->second;
      }
    }
    std::map<std::string, int> tag_index;
    for (const auto& seg : boundary) {
      auto it = lookup.find(key(seg.v0, seg.v1));
      require(it != lookup.end(), "mesh: boundary segment is not a mesh edge");
      Edge& e = edges_[it->second];
      require(e.is_boundary(), "mesh: boundary segment on interior edge");
      require(e.tag < 0, "mesh: boundary edge tagged twice");
      auto [ti, inserted] = tag_index.try_emplace(seg.label, static_cast<int>(tags_.size()));
      if (inserted) tags_.push_back(BoundaryTag{FluidBc::Dirichlet, HeatBc::Dirichlet, seg.label});
      e.tag = ti->second;
    }
    for (const auto& e : edges_)
      require(!e.is_boundary() || e.tag >= 0, "mesh: untagged boundary edge");
  }

  std::vector<Vec2> vertices_;
  std::vector<std::array<int, 4>> cells_;
  std::vector<Edge> edges_;
  std::vector<Vec2> centroids_;
  std::vector<std::array<int, 4>> cell_edges_;
  std::vector<BoundaryTag> tags_;
};

struct Rectangle {
  Vec2 lower{0.0, 0.0};
  Vec2 upper{1.0, 1.0};
};

namespace detail {

// Structured (nx+1) x (ny+1) vertex grid with labels bottom/right/top/left.
inline Mesh structured_mesh(int nx, int ny, const std::vector<Vec2>& vertices) {
  auto vid = [nx](int i, int j) { return j * (nx + 1) + i; };
  std::vector<std::array<int, 4>> cells;
  cells.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) cells.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)});
  std::vector<BoundarySegment> boundary;
  for (int i = 0; i < nx; ++i) boundary.push_back({vid(i, 0), vid(i + 1, 0), "bottom"});
  for (int j = 0; j < ny; ++j) boundary.push_back({vid(nx, j), vid(nx, j + 1), "right"});
  for (int i = 0; i < nx; ++i) boundary.push_back({vid(i + 1, ny), vid(i, ny), "top"});
  for (int j = 0; j < ny; ++j) boundary.push_back({vid(0, j + 1), vid(0, j), "left"});
  return Mesh(vertices, std::move(cells), boundary);
}

inline std::vector<Vec2> grid_vertices(int nx, int ny, const Rectangle& domain) {
  std::vector<Vec2> v;
  v.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1));
  const Vec2 size = domain.upper - domain.lower;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      v.emplace_back(domain.lower.x() + size.x() * i / nx, domain.lower.y() + size.y() * j / ny);
  return v;
}

}  // namespace detail

inline Mesh build_uniform_quad_mesh(int nx, int ny, const Rectangle& domain = {}) {
  require(nx >= 1 && ny >= 1, "uniform mesh: cell counts must be positive");
  require(domain.upper.x() > domain.lower.x() && domain.upper.y() > domain.lower.y(),
          "uniform mesh: empty domain");
  return detail::structured_mesh(nx, ny, detail::grid_vertices(nx, ny, domain));
}

/// Alternating trapezoids on the unit square: interior vertices on odd vertical
/// grid lines move vertically by +-distortion*h with alternating sign in j.
inline Mesh build_trapezoid_mesh(int nx, int ny, double distortion) {
  require(nx >= 1 && ny >= 1, "trapezoid mesh: cell counts must be positive");
  require(distortion >= 0.0 && distortion < 0.5, "trapezoid mesh: distortion must lie in [0, 0.5)");
  auto v = detail::grid_vertices(nx, ny, Rectangle{});
  const double hy = 1.0 / ny;
  for (int j = 1; j < ny; ++j)
    for (int i = 1; i < nx; i += 2) {
      const double sign = (j % 2 == 0) ? 1.0 : -1.0;
      v[j * (nx + 1) + i].y() += sign * distortion * hy;
    }
  return detail::structured_mesh(nx, ny, v);
}

/// Unit square with circular holes: cells whose centroid falls inside a hole are
/// removed and the exposed vertices are projected radially onto the circle.
/// Cells that would become reentrant are removed as well.
inline Mesh build_pore_mesh(int nx, int ny, const std::vector<Hole>& holes) {
  require(nx >= 1 && ny >= 1, "pore mesh: cell counts must be positive");
  for (std::size_t a = 0; a < holes.size(); ++a) {
    const Hole& h = holes[a];
    require(h.radius > 0.0, "pore mesh: hole radius must be positive");
    require(h.center.x() - h.radius > 0.0 && h.center.x() + h.radius < 1.0 &&
                h.center.y() - h.radius > 0.0 && h.center.y() + h.radius < 1.0,
            "pore mesh: hole touches the outer boundary");
    for (std::size_t b = a + 1; b < holes.size(); ++b)
      require((h.center - holes[b].center).norm() > h.radius + holes[b].radius,
              "pore mesh: holes intersect");
  }
  const Mesh base = build_uniform_quad_mesh(nx, ny);
  if (holes.empty()) return base;

  auto hole_of = [&](const Vec2& p) {
    for (std::size_t h = 0; h < holes.size(); ++h)
      if ((p - holes[h].center).norm() < holes[h].radius) return static_cast<int>(h);
    return -1;
  };
  std::vector<int> cell_hole(base.num_cells());
  for (int c = 0; c < base.num_cells(); ++c) cell_hole[c] = hole_of(base.centroid(c));

  // Projection onto the circle turns some staircase cells reentrant (three
  // vertices on the arc, or a corner pulled inwards). Such cells are absorbed
  // into the hole and the projection is repeated.
  const double h = std::min(1.0 / nx, 1.0 / ny);
  std::vector<int> touched_hole;
  std::vector<char> kept_vertex;
  std::vector<Vec2> projected;
  for (int pass = 0;; ++pass) {
    require(pass < 100, "pore mesh: hole cleanup did not terminate, refine the base mesh");
    touched_hole.assign(base.num_vertices(), -1);
    kept_vertex.assign(base.num_vertices(), 0);
    for (int c = 0; c < base.num_cells(); ++c)
      for (int v : base.cell(c)) {
        if (cell_hole[c] >= 0) touched_hole[v] = cell_hole[c];
        else kept_vertex[v] = 1;
      }
    projected = base.vertices();
    for (int v = 0; v < base.num_vertices(); ++v) {
      if (!kept_vertex[v] || touched_hole[v] < 0) continue;
      const Hole& hl = holes[touched_hole[v]];
      const Vec2 d = projected[v] - hl.center;
      require(d.norm() > 0.0, "pore mesh: vertex at hole center");
      projected[v] = hl.center + hl.radius * d / d.norm();
    }
    bool changed = false;
    for (int c = 0; c < base.num_cells(); ++c) {
      if (cell_hole[c] >= 0) continue;
      const auto& cv = base.cell(c);
      int touching = -1;
      double corner = std::numeric_limits<double>::infinity();
      for (int i = 0; i < 4; ++i) {
        if (touched_hole[cv[i]] >= 0) touching = touched_hole[cv[i]];
        const Vec2& p = projected[cv[i]];
        corner = std::min(corner, cross(projected[cv[(i + 1) % 4]] - p, projected[cv[(i + 3) % 4]] - p));
      }
      if (touching >= 0 && corner < 0.1 * h * h) {
        cell_hole[c] = touching;
        changed = true;
      }
    }
    if (!changed) break;
  }

  std::vector<int> renumber(base.num_vertices(), -1);
  std::vector<Vec2> vertices;
  for (int v = 0; v < base.num_vertices(); ++v) {
    if (!kept_vertex[v]) continue;
    renumber[v] = static_cast<int>(vertices.size());
    vertices.push_back(projected[v]);
  }
  std::vector<std::array<int, 4>> cells;
  for (int c = 0; c < base.num_cells(); ++c) {
    if (cell_hole[c] >= 0) continue;
    const auto& cv = base.cell(c);
    cells.push_back({renumber[cv[0]], renumber[cv[1]], renumber[cv[2]], renumber[cv[3]]});
  }
  std::vector<BoundarySegment> boundary;
  for (int ei = 0; ei < base.num_edges(); ++ei) {
    const Edge& e = base.edge(ei);
    const bool plus_kept = cell_hole[e.plus] < 0;
    if (e.is_boundary()) {
      if (plus_kept) boundary.push_back({renumber[e.vertices[0]], renumber[e.vertices[1]], base.edge_tag(ei).label});
      continue;
    }
    const bool minus_kept = cell_hole[e.minus] < 0;
    if (plus_kept != minus_kept) boundary.push_back({renumber[e.vertices[0]], renumber[e.vertices[1]], "pore"});
  }
  try {
    return Mesh(std::move(vertices), std::move(cells), boundary);
  } catch (const Error& err) {
    throw Error(std::string("pore mesh: projection produced an invalid cell, refine the base mesh (") +
                err.what() + ")");
  }
}

/// Default obstacle layout: three rows of three circles, middle row shifted.
inline std::vector<Hole> default_pore_layout(double radius = 0.1) {
  std::vector<Hole> holes;
  const double ys[3] = {0.2, 0.5, 0.8};
  for (int r = 0; r < 3; ++r) {
    const double shift = (r == 1) ? 0.1 : 0.0;
    for (double x : {0.2, 0.45, 0.7}) holes.push_back({Vec2(x + shift, ys[r]), radius});
  }
  return holes;
}

// Text format:
//   vertices N / N lines "x y"
//   cells M    / M lines of 4 zero-based CCW vertex indices
//   boundary K / K lines "v0 v1 label"
inline Mesh read_mesh(std::istream& in) {
  auto expect = [&](const std::string& word) {
    std::string token;
    int count = -1;
    in >> token >> count;
    require(in && token == word && count >= 0, "mesh file: expected '" + word + " <count>'");
    return count;
  };
  const int nv = expect("vertices");
  std::vector<Vec2> vertices(nv);
  for (auto& v : vertices) {
    in >> v.x() >> v.y();
    require(static_cast<bool>(in), "mesh file: malformed vertex line");
  }
  const int nc = expect("cells");
  std::vector<std::array<int, 4>> cells(nc);
  for (auto& c : cells) {
    in >> c[0] >> c[1] >> c[2] >> c[3];
    require(static_cast<bool>(in), "mesh file: malformed cell line");
  }
  const int nb = expect("boundary");
  std::vector<BoundarySegment> boundary(nb);
  for (auto& b : boundary) {
    in >> b.v0 >> b.v1 >> b.label;
    require(static_cast<bool>(in), "mesh file: malformed boundary line");
  }
  return Mesh(std::move(vertices), std::move(cells), boundary);
}

inline Mesh read_mesh_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "mesh file: cannot open " + path);
  return read_mesh(in);
}

inline void write_mesh(std::ostream& out, const Mesh& mesh) {
  out.precision(17);
  out << "vertices " << mesh.num_vertices() << '\n';
  for (const auto& v : mesh.vertices()) out << v.x() << ' ' << v.y() << '\n';
  out << "cells " << mesh.num_cells() << '\n';
  for (const auto& c : mesh.cells()) out << c[0] << ' ' << c[1] << ' ' << c[2] << ' ' << c[3] << '\n';
  int nb = 0;
  for (const auto& e : mesh.edges()) nb += e.is_boundary() ? 1 : 0;
  out << "boundary " << nb << '\n';
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const Edge& ed = mesh.edge(e);
    if (ed.is_boundary()) out << ed.vertices[0] << ' ' << ed.vertices[1] << ' ' << mesh.edge_tag(e).label << '\n';
  }
}

}  // namespace egflow
