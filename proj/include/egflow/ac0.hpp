#pragma once

#include "egflow/common.hpp"
#include "egflow/fem.hpp"
#include "egflow/mesh.hpp"

#include <array>
#include <vector>

namespace egflow {

/// Lowest-order Arbogast-Correa element on a convex quadrilateral.
///
/// Generators (vertices 0..3 counterclockwise):
///   G0 = x - x1,  G1 = x - x3,  G2 = x - x0,  G3 = J (xi, -eta) / det J,
/// where J is the Jacobian of the bilinear map from [-1,1]^2. Degrees of freedom
/// are the outward normal fluxes through local edges 0..3 (edge j joins vertices
/// (j+1)%4 and (j+2)%4). The dof matrix D has D(j, k) = flux of G_k through edge j,
/// and basis function psi_i = sum_k D^{-1}(k, i) G_k satisfies flux_j(psi_i) = delta_ij.
class AC0Element {
 public:
  explicit AC0Element(const std::array<Vec2, 4>& vertices) : geo_(vertices) {
    const auto& x = vertices;
    for (int j = 0; j < 4; ++j) {
      const Vec2& a = x[(j + 1) % 4];
      const Vec2& b = x[(j + 2) % 4];
      // For G = x - p the normal flux through a straight edge a->b is 2*area(p, a, b).
      dofs_(j, 0) = 2.0 * signed_area(x[1], a, b);
      dofs_(j, 1) = 2.0 * signed_area(x[3], a, b);
      dofs_(j, 2) = 2.0 * signed_area(x[0], a, b);
      // Piola transform preserves fluxes; (xi, -eta) has flux +2 on xi = +-1, -2 on eta = +-1.
      dofs_(j, 3) = (j % 2 == 0) ? 2.0 : -2.0;
    }
    Eigen::PartialPivLU<Eigen::Matrix4d> lu(dofs_);
    const double det = lu.determinant();
    const double scale = dofs_.cwiseAbs().maxCoeff();
    if (!(std::abs(det) > 1e-14 * std::pow(scale, 4)))
      throw Error("AC0 element: singular dof matrix (degenerate cell)");
    coefficients_ = lu.inverse();
    area_ = 0.5 * cross(x[2] - x[0], x[3] - x[1]);
  }

  const Eigen::Matrix4d& dof_matrix() const { return dofs_; }
  /// Inverse of the dof matrix; column i holds the generator coefficients of psi_i.
  const Eigen::Matrix4d& coefficients() const { return coefficients_; }
  const CellGeometry& geometry() const { return geo_; }
  double area() const { return area_; }

  std::array<Vec2, 4> generators(const Vec2& ref) const {
    const MappedPoint m = geo_.map(ref);
    const auto& x = geo_.vertices();
    return {m.x - x[1], m.x - x[3], m.x - x[0], m.jacobian * Vec2(ref.x(), -ref.y()) / m.det};
  }

  std::array<Vec2, 4> basis(const Vec2& ref) const { return combine(generators(ref)); }

  std::array<Vec2, 4> combine(const std::array<Vec2, 4>& g) const {
    std::array<Vec2, 4> psi;
    for (int i = 0; i < 4; ++i) {
      psi[i] = Vec2::Zero();
      for (int k = 0; k < 4; ++k) psi[i] += coefficients_(k, i) * g[k];
    }
    return psi;
  }

  /// Physical divergence of generator k at a reference point, by differentiating
  /// the generator through the bilinear map.
  double generator_divergence(int k, const Vec2& ref) const {
    if (k < 3) return 2.0;
    const auto& x = geo_.vertices();
    const Mat2 jac = geo_.jacobian(ref);
    const double det = jac.determinant();
    Vec2 b = Vec2::Zero();
    for (int a = 0; a < 4; ++a) b += 0.25 * q1::kXi[a] * q1::kEta[a] * x[a];
    std::array<Mat2, 2> djac;
    djac[0] << 0.0, b.x(), 0.0, b.y();
    djac[1] << b.x(), 0.0, b.y(), 0.0;
    Mat2 adj;
    adj << jac(1, 1), -jac(0, 1), -jac(1, 0), jac(0, 0);
    const Vec2 v(ref.x(), -ref.y());
    const std::array<Vec2, 2> dv = {Vec2(1.0, 0.0), Vec2(0.0, -1.0)};
    const Mat2 jinv = jac.inverse();
    double div = 0.0;
    for (int m = 0; m < 2; ++m) {
      const double ddet = (adj * djac[m]).trace();
      const Vec2 dphi = (djac[m] * v + jac * dv[m]) / det - jac * v * ddet / (det * det);
      for (int i = 0; i < 2; ++i) div += dphi[i] * jinv(m, i);
    }
    return div;
  }

  double basis_divergence(int i, const Vec2& ref) const {
    double d = 0.0;
    for (int k = 0; k < 4; ++k) d += coefficients_(k, i) * generator_divergence(k, ref);
    return d;
  }

 private:
  CellGeometry geo_;
  Eigen::Matrix4d dofs_;
  Eigen::Matrix4d coefficients_;
  double area_ = 0.0;
};

inline AC0Element build_ac0(const std::array<Vec2, 4>& vertices) { return AC0Element(vertices); }

/// Piecewise AC0 field stored as one normal flux per mesh edge, measured
/// against the edge's global normal.
struct ReconstructedField {
  Vector edge_flux;
};

/// Local representation of R on one cell: R v |_T = sum_j psi_j * (flux * v)_j,
/// where flux (4 x dofs.size()) maps stencil velocity dofs to outward edge fluxes.
struct ReconstructionStencil {
  std::vector<int> dofs;
  Eigen::Matrix<double, 4, Eigen::Dynamic> flux;
};

/// Velocity reconstruction into the piecewise AC0 space. Keeps a pointer to the
/// mesh, which must outlive the operator. Interior edge fluxes are
/// the integral of the averaged EG trace. On fluid-Dirichlet boundary edges only
/// the continuous part contributes; on fluid-Neumann edges both parts do.
class ReconstructionOperator {
 public:
  explicit ReconstructionOperator(const Mesh& mesh) : mesh_(&mesh), dofs_(mesh) {
    elements_.reserve(mesh.num_cells());
    for (int c = 0; c < mesh.num_cells(); ++c) elements_.emplace_back(mesh.cell_vertices(c));
    edge_rule_ = quadrature_rule(QuadratureKind::Edge, 5);
    build_stencils();
  }

  const Mesh& mesh() const { return *mesh_; }
  const AC0Element& element(int c) const { return elements_[c]; }
  const ReconstructionStencil& stencil(int c) const { return stencils_[c]; }

  /// Weight of the enrichment trace in boundary edge fluxes.
  double dg_boundary_weight(int e) const {
    return mesh_->edge_tag(e).fluid == FluidBc::Dirichlet ? 0.0 : 1.0;
  }

  /// Global-normal flux of the EG field through edge e by edge quadrature.
  double edge_flux(const EGVelocityField& u, int e) const {
    const Edge& ed = mesh_->edge(e);
    double flux = 0.0;
    for (std::size_t q = 0; q < edge_rule_.size(); ++q) {
      const double t = 0.5 * (edge_rule_.points[q].x() + 1.0);
      const double w = 0.5 * edge_rule_.weights[q] * ed.length;
      const Vec2 x = edge_point(*mesh_, e, t);
      if (!ed.is_boundary()) {
        flux += w * edge_trace(*mesh_, u, e, t).average.dot(ed.normal);
        continue;
      }
      const CellPoint p = cell_point(CellGeometry(*mesh_, ed.plus), edge_ref_point(*mesh_, ed.plus, e, t));
      Vec2 cg = Vec2::Zero();
      const auto& cv = mesh_->cell(ed.plus);
      for (int i = 0; i < 4; ++i) cg += p.shape[i] * Vec2(u.cg[2 * cv[i]], u.cg[2 * cv[i] + 1]);
      const Vec2 dg = u.dg[ed.plus] * (x - mesh_->centroid(ed.plus));
      flux += w * (cg + dg_boundary_weight(e) * dg).dot(ed.normal);
    }
    return flux;
  }

  ReconstructedField apply(const EGVelocityField& u) const {
    require(u.cg.size() == dofs_.num_cg() && u.dg.size() == mesh_->num_cells(),
            "reconstruct: field does not match mesh");
    ReconstructedField r{Vector(mesh_->num_edges())};
    for (int e = 0; e < mesh_->num_edges(); ++e) r.edge_flux[e] = edge_flux(u, e);
    return r;
  }

  /// Same operator through the cell stencils; returns outward fluxes of cell c.
  Eigen::Vector4d stencil_fluxes(const EGVelocityField& u, int c) const { return stencil_fluxes(u.packed(), c); }

  /// As above for a packed velocity vector [cg | dg].
  Eigen::Vector4d stencil_fluxes(const Vector& packed, int c) const { return stencils_[c].flux * gather(packed, c); }

  /// Stencil dof values of a packed velocity vector.
  Eigen::VectorXd gather(const Vector& packed, int c) const {
    const auto& s = stencils_[c];
    Eigen::VectorXd local(s.dofs.size());
    for (std::size_t k = 0; k < s.dofs.size(); ++k) local[k] = packed[s.dofs[k]];
    return local;
  }

  /// Edge fluxes through the cell stencils (same values as apply()).
  ReconstructedField apply_stencils(const Vector& packed) const {
    ReconstructedField r{Vector(mesh_->num_edges())};
    for (int e = 0; e < mesh_->num_edges(); ++e) {
      const Edge& ed = mesh_->edge(e);
      r.edge_flux[e] = stencil_fluxes(packed, ed.plus)[mesh_->local_edge(ed.plus, e)];
    }
    return r;
  }

  Eigen::Vector4d outward_fluxes(const ReconstructedField& r, int c) const {
    Eigen::Vector4d f;
    const auto& ce = mesh_->cell_edges(c);
    for (int j = 0; j < 4; ++j) f[j] = mesh_->edge_sign(c, ce[j]) * r.edge_flux[ce[j]];
    return f;
  }

  Vec2 value_ref(const ReconstructedField& r, int c, const Vec2& ref) const {
    return value_from_basis(elements_[c].basis(ref), outward_fluxes(r, c));
  }

  Vec2 value(const ReconstructedField& r, int c, const Vec2& x) const {
    require(c >= 0 && c < mesh_->num_cells(), "evaluate_reconstructed: invalid cell");
    return value_ref(r, c, elements_[c].geometry().inverse(x));
  }

  double divergence(const ReconstructedField& r, int c) const {
    return outward_fluxes(r, c).sum() / mesh_->cell_area(c);
  }

  static Vec2 value_from_basis(const std::array<Vec2, 4>& psi, const Eigen::Vector4d& fluxes) {
    return fluxes[0] * psi[0] + fluxes[1] * psi[1] + fluxes[2] * psi[2] + fluxes[3] * psi[3];
  }

 private:
  void build_stencils() {
    const Mesh& m = *mesh_;
    stencils_.resize(m.num_cells());
    for (int c = 0; c < m.num_cells(); ++c) {
      auto& s = stencils_[c];
      const auto& cv = m.cell(c);
      for (int i = 0; i < 4; ++i) {
        s.dofs.push_back(dofs_.cg(cv[i], 0));
        s.dofs.push_back(dofs_.cg(cv[i], 1));
      }
      s.dofs.push_back(dofs_.dg(c));
      const auto& ce = m.cell_edges(c);
      for (int j = 0; j < 4; ++j) {
        const Edge& ed = m.edge(ce[j]);
        if (!ed.is_boundary()) s.dofs.push_back(dofs_.dg(ed.plus == c ? ed.minus : ed.plus));
      }
      s.flux = Eigen::Matrix<double, 4, Eigen::Dynamic>::Zero(4, static_cast<int>(s.dofs.size()));
      auto column = [&](int dof) {
        for (std::size_t k = 0; k < s.dofs.size(); ++k)
          if (s.dofs[k] == dof) return static_cast<int>(k);
        throw Error("reconstruction stencil: missing dof");
      };
      for (int j = 0; j < 4; ++j) {
        const int e = ce[j];
        const Edge& ed = m.edge(e);
        const double sign = m.edge_sign(c, e);
        // Q1 hats are linear along the edge: integral is |e|/2.
        for (int v : ed.vertices)
          for (int d = 0; d < 2; ++d) s.flux(j, column(dofs_.cg(v, d))) += sign * 0.5 * ed.length * ed.normal[d];
        const Vec2 mid = 0.5 * (m.vertex(ed.vertices[0]) + m.vertex(ed.vertices[1]));
        auto dg_flux = [&](int k) { return (mid - m.centroid(k)).dot(ed.normal) * ed.length; };
        if (ed.is_boundary()) {
          s.flux(j, column(dofs_.dg(c))) += sign * dg_boundary_weight(e) * dg_flux(c);
        } else {
          s.flux(j, column(dofs_.dg(ed.plus))) += sign * 0.5 * dg_flux(ed.plus);
          s.flux(j, column(dofs_.dg(ed.minus))) += sign * 0.5 * dg_flux(ed.minus);
        }
      }
    }
  }

  const Mesh* mesh_;
  DofMap dofs_;
  std::vector<AC0Element> elements_;
  std::vector<ReconstructionStencil> stencils_;
  QuadratureRule edge_rule_;
};

inline ReconstructedField reconstruct(const ReconstructionOperator& op, const EGVelocityField& u) {
  return op.apply(u);
}

inline Vec2 evaluate_reconstructed(const ReconstructionOperator& op, const ReconstructedField& r, int cell,
                                   const Vec2& x) {
  return op.value(r, cell, x);
}

inline double cell_divergence(const ReconstructionOperator& op, const ReconstructedField& r, int cell) {
  return op.divergence(r, cell);
}

}  // namespace egflow
