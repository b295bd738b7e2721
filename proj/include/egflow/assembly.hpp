#pragma once

#include "egflow/ac0.hpp"
#include "egflow/common.hpp"
#include "egflow/fem.hpp"
#include "egflow/mesh.hpp"
#include "egflow/problem.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace egflow {

struct AssemblyConfig {
  double zeta = 1.0;
  double alpha = 6.0;
  bool use_reconstruction = true;
  /// PR mode only: advect temperature with R(beta) instead of beta.
  bool reconstruct_heat_advection = true;
  double stabilization_c = 0.0;
  /// false drops (beta . grad) u from the momentum equation (Stokes regime).
  bool fluid_advection = true;
  double dt = 0.01;
  double Re = 1.0;
  double Ri = 0.0;
  double Pr = 1.0;
  Vec2 e_hat = Vec2(0.0, 1.0);
  int cell_degree = 5;
  int edge_degree = 5;

  double kappa() const { return 1.0 / (Re * Pr); }

  void validate() const {
    require(alpha > 0.0, "assembly: alpha must be positive");
    require(zeta == -1.0 || zeta == 0.0 || zeta == 1.0, "assembly: zeta must be -1, 0 or 1");
    require(dt > 0.0, "assembly: dt must be positive");
    require(Re > 0.0 && Pr > 0.0, "assembly: Re and Pr must be positive");
    require(stabilization_c >= 0.0, "assembly: stabilization constant must be non-negative");
    require(std::abs(e_hat.norm() - 1.0) < 1e-12, "assembly: e_hat must be a unit vector");
  }
};

enum class PressureGauge { PinThenShift, None };

struct LinearSystem {
  SparseMatrix matrix;
  Vector rhs;
};

/// Fluid system over [velocity | pressure] dofs. Constrained rows are identity rows.
struct SaddleSystem {
  SparseMatrix matrix;
  Vector rhs;
  std::vector<int> constrained;
  Vector constrained_values;
  int pinned_pressure = -1;
};

/// Collects element contributions while eliminating strongly constrained dofs
/// symmetrically: constrained rows are skipped, constrained columns move to the
/// right-hand side, and identity rows are appended at the end.
class ConstrainedAssembler {
 public:
  ConstrainedAssembler(int n, const std::vector<char>& constrained, const Vector& values)
      : n_(n), constrained_(&constrained), values_(&values), rhs_(Vector::Zero(n)) {}

  void reserve(std::size_t n) { triplets_.reserve(n); }

  void add(int i, int j, double v) {
    if ((*constrained_)[i]) return;
    if ((*constrained_)[j]) {
      rhs_[i] -= v * (*values_)[j];
      return;
    }
    triplets_.emplace_back(i, j, v);
  }

  void add_rhs(int i, double v) {
    if (!(*constrained_)[i]) rhs_[i] += v;
  }

  LinearSystem finish() {
    for (int i = 0; i < n_; ++i)
      if ((*constrained_)[i]) {
        triplets_.emplace_back(i, i, 1.0);
        rhs_[i] = (*values_)[i];
      }
    LinearSystem s{SparseMatrix(n_, n_), std::move(rhs_)};
    s.matrix.setFromTriplets(triplets_.begin(), triplets_.end());
    triplets_.clear();
    return s;
  }

 private:
  int n_;
  const std::vector<char>* constrained_;
  const Vector* values_;
  Vector rhs_;
  std::vector<Triplet> triplets_;
};

/// The nine EG velocity basis functions of one cell at one point:
/// 2*i + d is the CG hat of local vertex i in component d, 8 is x - x_T.
struct LocalVelocityBasis {
  std::array<Vec2, 9> value;
  std::array<Mat2, 9> grad;
};

inline LocalVelocityBasis local_velocity_basis(const Mesh& mesh, int c, const CellPoint& p) {
  LocalVelocityBasis b;
  for (int i = 0; i < 4; ++i)
    for (int d = 0; d < 2; ++d) {
      Vec2 v = Vec2::Zero();
      v[d] = p.shape[i];
      Mat2 g = Mat2::Zero();
      g.row(d) = p.grad[i].transpose();
      b.value[2 * i + d] = v;
      b.grad[2 * i + d] = g;
    }
  b.value[8] = p.x - mesh.centroid(c);
  b.grad[8] = Mat2::Identity();
  return b;
}

inline Mat2 strain(const Mat2& g) { return 0.5 * (g + g.transpose()); }

/// Mesh-dependent data shared by all assemblies: quadrature points, edge
/// traces, reconstruction stencils and their AC0 values, mass matrices.
class Discretization {
 public:
  struct EdgePoint {
    Vec2 x;
    double weight = 0.0;  // includes |e|/2
    std::array<CellPoint, 2> side;  // plus, minus
  };

  explicit Discretization(const Mesh& mesh, int cell_degree = 5, int edge_degree = 5)
      : mesh_(&mesh), dofs_(mesh), rec_(mesh) {
    const QuadratureRule cell_rule = quadrature_rule(QuadratureKind::Cell, cell_degree);
    const QuadratureRule edge_rule = quadrature_rule(QuadratureKind::Edge, edge_degree);
    const int nc = mesh.num_cells();
    cell_points_.resize(nc);
    vertex_points_.resize(nc);
    rec_values_.resize(nc);
    rec_vertex_values_.resize(nc);
    velocity_dofs_.resize(nc);
    for (int c = 0; c < nc; ++c) {
      const CellGeometry geo(mesh, c);
      cell_points_[c] = cell_points(mesh, c, cell_rule);
      for (int i = 0; i < 4; ++i) vertex_points_[c][i] = cell_point(geo, Vec2(q1::kXi[i], q1::kEta[i]));
      const auto& s = rec_.stencil(c);
      auto rec_matrix = [&](const Vec2& ref) {
        const auto psi = rec_.element(c).basis(ref);
        Eigen::Matrix<double, 2, 4> p;
        for (int j = 0; j < 4; ++j) p.col(j) = psi[j];
        return Eigen::Matrix<double, 2, Eigen::Dynamic>(p * s.flux);
      };
      for (const auto& p : cell_points_[c]) rec_values_[c].push_back(rec_matrix(p.ref));
      for (const auto& p : vertex_points_[c]) rec_vertex_values_[c].push_back(rec_matrix(p.ref));
      const auto& cv = mesh.cell(c);
      for (int i = 0; i < 4; ++i)
        for (int d = 0; d < 2; ++d) velocity_dofs_[c][2 * i + d] = dofs_.cg(cv[i], d);
      velocity_dofs_[c][8] = dofs_.dg(c);
    }
    edge_points_.resize(mesh.num_edges());
    for (int e = 0; e < mesh.num_edges(); ++e) {
      const Edge& ed = mesh.edge(e);
      for (std::size_t q = 0; q < edge_rule.size(); ++q) {
        const double t = 0.5 * (edge_rule.points[q].x() + 1.0);
        EdgePoint ep;
        ep.x = edge_point(mesh, e, t);
        ep.weight = 0.5 * edge_rule.weights[q] * ed.length;
        ep.side[0] = cell_point(CellGeometry(mesh, ed.plus), edge_ref_point(mesh, ed.plus, e, t));
        if (!ed.is_boundary())
          ep.side[1] = cell_point(CellGeometry(mesh, ed.minus), edge_ref_point(mesh, ed.minus, e, t));
        edge_points_[e].push_back(ep);
      }
    }
    build_mass_matrices();
  }

  const Mesh& mesh() const { return *mesh_; }
  const DofMap& dofs() const { return dofs_; }
  const ReconstructionOperator& reconstruction() const { return rec_; }
  const std::vector<CellPoint>& points(int c) const { return cell_points_[c]; }
  const std::array<CellPoint, 4>& vertex_points(int c) const { return vertex_points_[c]; }
  const std::vector<EdgePoint>& edge_points(int e) const { return edge_points_[e]; }
  /// R restricted to cell c at quadrature point q, as a 2 x stencil matrix.
  const Eigen::Matrix<double, 2, Eigen::Dynamic>& rec_value(int c, int q) const { return rec_values_[c][q]; }
  const Eigen::Matrix<double, 2, Eigen::Dynamic>& rec_vertex_value(int c, int i) const {
    return rec_vertex_values_[c][i];
  }
  const std::array<int, 9>& velocity_dofs(int c) const { return velocity_dofs_[c]; }

  /// L2 mass matrices of the EG velocity space and the Q1 temperature space.
  const SparseMatrix& velocity_mass() const { return velocity_mass_; }
  const SparseMatrix& temperature_mass() const { return temperature_mass_; }
  const Vector& cell_areas() const { return areas_; }

 private:
  void build_mass_matrices() {
    const Mesh& m = *mesh_;
    std::vector<Triplet> tu, tt;
    areas_.resize(m.num_cells());
    for (int c = 0; c < m.num_cells(); ++c) {
      areas_[c] = m.cell_area(c);
      const auto& vd = velocity_dofs_[c];
      const auto& cv = m.cell(c);
      Eigen::Matrix<double, 9, 9> mu = Eigen::Matrix<double, 9, 9>::Zero();
      Eigen::Matrix4d mt = Eigen::Matrix4d::Zero();
      for (const auto& p : cell_points_[c]) {
        const auto b = local_velocity_basis(m, c, p);
        for (int a = 0; a < 9; ++a)
          for (int k = 0; k < 9; ++k) mu(a, k) += p.jxw * b.value[a].dot(b.value[k]);
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) mt(i, j) += p.jxw * p.shape[i] * p.shape[j];
      }
      for (int a = 0; a < 9; ++a)
        for (int k = 0; k < 9; ++k) tu.emplace_back(vd[a], vd[k], mu(a, k));
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) tt.emplace_back(cv[i], cv[j], mt(i, j));
    }
    velocity_mass_.resize(dofs_.num_velocity(), dofs_.num_velocity());
    velocity_mass_.setFromTriplets(tu.begin(), tu.end());
    temperature_mass_.resize(dofs_.num_temperature(), dofs_.num_temperature());
    temperature_mass_.setFromTriplets(tt.begin(), tt.end());
  }

  const Mesh* mesh_;
  DofMap dofs_;
  ReconstructionOperator rec_;
  std::vector<std::vector<CellPoint>> cell_points_;
  std::vector<std::array<CellPoint, 4>> vertex_points_;
  std::vector<std::vector<Eigen::Matrix<double, 2, Eigen::Dynamic>>> rec_values_;
  std::vector<std::vector<Eigen::Matrix<double, 2, Eigen::Dynamic>>> rec_vertex_values_;
  std::vector<std::array<int, 9>> velocity_dofs_;
  std::vector<std::vector<EdgePoint>> edge_points_;
  SparseMatrix velocity_mass_;
  SparseMatrix temperature_mass_;
  Vector areas_;
};

// ---------------------------------------------------------------------------
// Boundary constraints
// ---------------------------------------------------------------------------

/// Strong Dirichlet data on the CG velocity dofs (vertices of fluid-Dirichlet edges).
inline void velocity_constraints(const Mesh& mesh, const Problem& pb, double t, std::vector<char>& mask,
                                 Vector& values) {
  const DofMap dofs(mesh);
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const Edge& ed = mesh.edge(e);
    if (!ed.is_boundary() || mesh.edge_tag(e).fluid != FluidBc::Dirichlet) continue;
    const VectorFn& ud = pb.velocity(mesh.edge_tag(e).label);
    for (int v : ed.vertices) {
      if (mask[dofs.cg(v, 0)]) continue;
      const Vec2 val = ud(mesh.vertex(v), t);
      for (int d = 0; d < 2; ++d) {
        mask[dofs.cg(v, d)] = 1;
        values[dofs.cg(v, d)] = val[d];
      }
    }
  }
}

inline void temperature_constraints(const Mesh& mesh, const Problem& pb, double t, std::vector<char>& mask,
                                    Vector& values) {
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const Edge& ed = mesh.edge(e);
    if (!ed.is_boundary() || mesh.edge_tag(e).heat != HeatBc::Dirichlet) continue;
    const ScalarFn& td = pb.temperature(mesh.edge_tag(e).label);
    for (int v : ed.vertices) {
      if (mask[v]) continue;
      mask[v] = 1;
      values[v] = td(mesh.vertex(v), t);
    }
  }
}

// ---------------------------------------------------------------------------
// Advecting velocity
// ---------------------------------------------------------------------------

/// The advecting field of one assembly: either the EG field itself or its
/// reconstruction, evaluated at cached points.
class AdvectionField {
 public:
  AdvectionField(const Discretization& d, const EGVelocityField& beta, bool reconstructed)
      : d_(&d), beta_(&beta), reconstructed_(reconstructed), packed_(beta.packed()) {
    if (reconstructed_) flux_ = d.reconstruction().apply_stencils(packed_).edge_flux;
  }

  bool reconstructed() const { return reconstructed_; }

  Vec2 at_cell_point(int c, int q) const {
    if (reconstructed_) return d_->rec_value(c, q) * d_->reconstruction().gather(packed_, c);
    return eg_value(d_->mesh(), *beta_, c, d_->points(c)[q]);
  }

  Vec2 at_vertex(int c, int i) const {
    if (reconstructed_) return d_->rec_vertex_value(c, i) * d_->reconstruction().gather(packed_, c);
    return eg_value(d_->mesh(), *beta_, c, d_->vertex_points(c)[i]);
  }

  /// Normal component {beta}.n (global normal) at edge point q.
  double normal_component(int e, int q) const {
    const Edge& ed = d_->mesh().edge(e);
    if (reconstructed_) return flux_[e] / ed.length;
    const auto& ep = d_->edge_points(e)[q];
    Vec2 b = eg_value(d_->mesh(), *beta_, ed.plus, ep.side[0]);
    if (!ed.is_boundary()) b = 0.5 * (b + eg_value(d_->mesh(), *beta_, ed.minus, ep.side[1]));
    return b.dot(ed.normal);
  }

  /// One-sided EG trace on a boundary edge.
  Vec2 boundary_trace(int e, int q) const {
    const Edge& ed = d_->mesh().edge(e);
    return eg_value(d_->mesh(), *beta_, ed.plus, d_->edge_points(e)[q].side[0]);
  }

  /// Max Euclidean norm over the quadrature points and vertices of cell c.
  double max_norm(int c) const {
    double m = 0.0;
    for (std::size_t q = 0; q < d_->points(c).size(); ++q) m = std::max(m, at_cell_point(c, static_cast<int>(q)).norm());
    for (int i = 0; i < 4; ++i) m = std::max(m, at_vertex(c, i).norm());
    return m;
  }

 private:
  const Discretization* d_;
  const EGVelocityField* beta_;
  bool reconstructed_;
  Vector packed_;
  Vector flux_;
};

// ---------------------------------------------------------------------------
// Heat system
// ---------------------------------------------------------------------------

/// Backward Euler heat system a_theta + D_theta = F_theta at time t.
inline LinearSystem assemble_heat(const Discretization& d, const Problem& pb, const AssemblyConfig& cfg,
                                  const EGVelocityField& beta, const Vector& theta_old, double t) {
  cfg.validate();
  const Mesh& mesh = d.mesh();
  const int n = mesh.num_vertices();
  require(theta_old.size() == n, "assemble_heat: temperature size mismatch");
  std::vector<char> mask(n, 0);
  Vector values = Vector::Zero(n);
  temperature_constraints(mesh, pb, t, mask, values);
  ConstrainedAssembler A(n, mask, values);
  A.reserve(16 * static_cast<std::size_t>(mesh.num_cells()));

  const AdvectionField adv(d, beta, cfg.use_reconstruction && cfg.reconstruct_heat_advection);
  const double kappa = cfg.kappa();
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cv = mesh.cell(c);
    double diffusion = kappa;
    if (cfg.stabilization_c > 0.0) diffusion += cfg.stabilization_c * mesh.cell_diameter(c) * adv.max_norm(c);
    Eigen::Matrix4d k = Eigen::Matrix4d::Zero();
    Eigen::Vector4d f = Eigen::Vector4d::Zero();
    const auto& pts = d.points(c);
    for (std::size_t q = 0; q < pts.size(); ++q) {
      const CellPoint& p = pts[q];
      const Vec2 b = adv.at_cell_point(c, static_cast<int>(q));
      const double old = q1_value(mesh, theta_old, c, p);
      const double src = pb.heat_source(p.x, t);
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j)
          k(i, j) += p.jxw * (p.shape[j] * p.shape[i] / cfg.dt + b.dot(p.grad[j]) * p.shape[i] +
                              diffusion * p.grad[j].dot(p.grad[i]));
        f[i] += p.jxw * (old / cfg.dt + src) * p.shape[i];
      }
    }
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) A.add(cv[i], cv[j], k(i, j));
      A.add_rhs(cv[i], f[i]);
    }
  }
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const Edge& ed = mesh.edge(e);
    if (!ed.is_boundary() || mesh.edge_tag(e).heat != HeatBc::Neumann) continue;
    const ScalarFn& qn = pb.heat_flux(mesh.edge_tag(e).label);
    const auto& cv = mesh.cell(ed.plus);
    for (const auto& ep : d.edge_points(e)) {
      const double g = qn(ep.x, t);
      for (int i = 0; i < 4; ++i) A.add_rhs(cv[i], ep.weight * g * ep.side[0].shape[i]);
    }
  }
  return A.finish();
}

// ---------------------------------------------------------------------------
// Fluid system
// ---------------------------------------------------------------------------

/// Backward Euler / Picard fluid system at time t. ST mode assembles
/// a_u + b + c = F_u; PR mode tests mass, advection and forcing against R v.
/// beta is the previous Picard iterate, u_old the previous time level and theta
/// the current temperature iterate.
inline SaddleSystem assemble_fluid(const Discretization& d, const Problem& pb, const AssemblyConfig& cfg,
                                   const EGVelocityField& beta, const EGVelocityField& u_old, const Vector& theta,
                                   double t) {
  cfg.validate();
  const Mesh& mesh = d.mesh();
  const DofMap& dofs = d.dofs();
  const int n = dofs.num_fluid();
  require(theta.size() == mesh.num_vertices(), "assemble_fluid: temperature size mismatch");
  std::vector<char> mask(n, 0);
  Vector values = Vector::Zero(n);
  velocity_constraints(mesh, pb, t, mask, values);
  ConstrainedAssembler A(n, mask, values);
  A.reserve(400 * static_cast<std::size_t>(mesh.num_cells()));

  const bool pr = cfg.use_reconstruction;
  const EGVelocityField still = cfg.fluid_advection ? EGVelocityField() : EGVelocityField(mesh);
  const AdvectionField adv(d, cfg.fluid_advection ? beta : still, pr);
  const double nu2 = 2.0 / cfg.Re;
  const Vector old_packed = u_old.packed();
  const auto& rec = d.reconstruction();

  // Cell terms.
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& vd = d.velocity_dofs(c);
    const int pc = dofs.pressure(c);
    Eigen::Matrix<double, 9, 9> k = Eigen::Matrix<double, 9, 9>::Zero();
    Eigen::Matrix<double, 9, 1> div = Eigen::Matrix<double, 9, 1>::Zero();
    Eigen::Matrix<double, 9, 1> f = Eigen::Matrix<double, 9, 1>::Zero();
    const auto& pts = d.points(c);
    const auto* stencil = pr ? &rec.stencil(c) : nullptr;
    const int ns = pr ? static_cast<int>(stencil->dofs.size()) : 0;
    Eigen::MatrixXd kr, ka;
    Eigen::VectorXd fr, old_local;
    if (pr) {
      kr = Eigen::MatrixXd::Zero(ns, ns);
      ka = Eigen::MatrixXd::Zero(ns, 9);
      fr = Eigen::VectorXd::Zero(ns);
      old_local = rec.gather(old_packed, c);
    }
    for (std::size_t q = 0; q < pts.size(); ++q) {
      const CellPoint& p = pts[q];
      const auto b = local_velocity_basis(mesh, c, p);
      const Vec2 bq = adv.at_cell_point(c, static_cast<int>(q));
      const Vec2 load = pb.body_force(p.x, t) + cfg.Ri * q1_value(mesh, theta, c, p) * cfg.e_hat;
      std::array<Mat2, 9> eps;
      std::array<Vec2, 9> conv;  // (beta . grad) phi
      for (int a = 0; a < 9; ++a) {
        eps[a] = strain(b.grad[a]);
        conv[a] = b.grad[a] * bq;
      }
      for (int a = 0; a < 9; ++a) {
        for (int m = 0; m < 9; ++m) k(a, m) += p.jxw * nu2 * (eps[m].cwiseProduct(eps[a])).sum();
        div[a] += p.jxw * b.grad[a].trace();
      }
      if (pr) {
        const auto& rv = d.rec_value(c, static_cast<int>(q));
        kr.noalias() += (p.jxw / cfg.dt) * rv.transpose() * rv;
        Eigen::Matrix<double, 2, 9> cm;
        for (int m = 0; m < 9; ++m) cm.col(m) = conv[m];
        ka.noalias() += p.jxw * rv.transpose() * cm;
        const Vec2 old = rv * old_local;
        fr.noalias() += p.jxw * rv.transpose() * (old / cfg.dt + load);
      } else {
        const Vec2 old = eg_value(mesh, u_old, c, p);
        for (int a = 0; a < 9; ++a) {
          for (int m = 0; m < 9; ++m)
            k(a, m) += p.jxw * (b.value[m].dot(b.value[a]) / cfg.dt + conv[m].dot(b.value[a]));
          f[a] += p.jxw * (old / cfg.dt + load).dot(b.value[a]);
        }
      }
    }
    for (int a = 0; a < 9; ++a) {
      for (int m = 0; m < 9; ++m) A.add(vd[a], vd[m], k(a, m));
      A.add(vd[a], pc, -div[a]);
      A.add(pc, vd[a], -div[a]);
      A.add_rhs(vd[a], f[a]);
    }
    A.add(pc, pc, 0.0);  // keeps a diagonal slot for the pressure gauge
    if (pr) {
      for (int a = 0; a < ns; ++a) {
        for (int m = 0; m < ns; ++m) A.add(stencil->dofs[a], stencil->dofs[m], kr(a, m));
        for (int m = 0; m < 9; ++m) A.add(stencil->dofs[a], vd[m], ka(a, m));
        A.add_rhs(stencil->dofs[a], fr[a]);
      }
    }
  }

  // Edge terms.
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const Edge& ed = mesh.edge(e);
    const BoundaryTag* tag = ed.is_boundary() ? &mesh.edge_tag(e) : nullptr;
    const bool dirichlet = tag && tag->fluid == FluidBc::Dirichlet;
    const bool neumann = tag && tag->fluid == FluidBc::Neumann;
    const int sides = ed.is_boundary() ? 1 : 2;
    const int nl = 9 * sides;
    std::array<int, 18> ld{};
    std::array<int, 2> pd{dofs.pressure(ed.plus), ed.is_boundary() ? -1 : dofs.pressure(ed.minus)};
    for (int s = 0; s < sides; ++s)
      for (int a = 0; a < 9; ++a) ld[9 * s + a] = d.velocity_dofs(s == 0 ? ed.plus : ed.minus)[a];
    const double avg = ed.is_boundary() ? 1.0 : 0.5;
    const double penalty = cfg.alpha / ed.length;
    const Vec2& nrm = ed.normal;

    Eigen::Matrix<double, 18, 18> k = Eigen::Matrix<double, 18, 18>::Zero();
    Eigen::Matrix<double, 18, 2> cp = Eigen::Matrix<double, 18, 2>::Zero();
    Eigen::Matrix<double, 18, 1> f = Eigen::Matrix<double, 18, 1>::Zero();
    double constraint_rhs = 0.0;
    const VectorFn* ud = dirichlet ? &pb.velocity(tag->label) : nullptr;
    const VectorFn* tn = neumann ? &pb.traction(tag->label) : nullptr;
    Vec2 ua, ub;  // CG boundary values at the edge ends
    if (dirichlet) {
      ua = Vec2(values[dofs.cg(ed.vertices[0], 0)], values[dofs.cg(ed.vertices[0], 1)]);
      ub = Vec2(values[dofs.cg(ed.vertices[1], 0)], values[dofs.cg(ed.vertices[1], 1)]);
    }
    const auto& eps_pts = d.edge_points(e);
    for (std::size_t q = 0; q < eps_pts.size(); ++q) {
      const auto& ep = eps_pts[q];
      const double w = ep.weight;
      std::array<Vec2, 18> val, jump, sn;  // trace, jump contribution, {eps}n contribution
      for (int s = 0; s < sides; ++s) {
        const int c = s == 0 ? ed.plus : ed.minus;
        const auto b = local_velocity_basis(mesh, c, ep.side[s]);
        const double sign = s == 0 ? 1.0 : -1.0;
        for (int a = 0; a < 9; ++a) {
          val[9 * s + a] = b.value[a];
          jump[9 * s + a] = sign * b.value[a];
          sn[9 * s + a] = avg * strain(b.grad[a]) * nrm;
        }
      }
      if (!tag || dirichlet) {
        for (int a = 0; a < nl; ++a) {
          for (int m = 0; m < nl; ++m)
            k(a, m) += w * nu2 * (-sn[m].dot(jump[a]) - cfg.zeta * jump[m].dot(sn[a]) + penalty * jump[m].dot(jump[a]));
          for (int s = 0; s < sides; ++s) cp(a, s) += w * avg * jump[a].dot(nrm);
        }
      }
      const double bn = adv.normal_component(e, static_cast<int>(q));
      if (!tag) {
        // Upwind: |{beta}.n| (u_down - u_up) . v_down; both orientations keep a fixed pattern.
        const double down_minus = std::max(bn, 0.0);
        const double down_plus = std::max(-bn, 0.0);
        for (int a = 0; a < 9; ++a)
          for (int m = 0; m < 9; ++m) {
            k(a, m) += w * down_plus * val[m].dot(val[a]);
            k(a, 9 + m) -= w * down_plus * val[9 + m].dot(val[a]);
            k(9 + a, 9 + m) += w * down_minus * val[9 + m].dot(val[9 + a]);
            k(9 + a, m) -= w * down_minus * val[m].dot(val[9 + a]);
          }
        continue;
      }
      const double inflow = std::max(-bn, 0.0);
      Vec2 u_in = Vec2::Zero();
      if (dirichlet) {
        const Vec2 g = (*ud)(ep.x, t);
        u_in = g;
        for (int a = 0; a < 9; ++a) f[a] += w * nu2 * (-cfg.zeta * g.dot(sn[a]) + penalty * g.dot(val[a]));
        const double s = (ep.x - mesh.vertex(ed.vertices[0])).norm() / ed.length;
        constraint_rhs += w * ((1.0 - s) * ua + s * ub).dot(nrm);
      } else {
        const Vec2 g = (*tn)(ep.x, t);
        for (int a = 0; a < 9; ++a) f[a] += w * g.dot(val[a]);
        u_in = adv.boundary_trace(e, static_cast<int>(q));
      }
      for (int a = 0; a < 9; ++a) {
        for (int m = 0; m < 9; ++m) k(a, m) += w * inflow * val[m].dot(val[a]);
        f[a] += w * inflow * u_in.dot(val[a]);
      }
    }
    for (int a = 0; a < nl; ++a) {
      for (int m = 0; m < nl; ++m) A.add(ld[a], ld[m], k(a, m));
      A.add_rhs(ld[a], f[a]);
      if (!tag || dirichlet)
        for (int s = 0; s < sides; ++s) {
          A.add(ld[a], pd[s], cp(a, s));
          A.add(pd[s], ld[a], cp(a, s));
        }
    }
    if (dirichlet) A.add_rhs(pd[0], constraint_rhs);
  }

  LinearSystem sys = A.finish();
  SaddleSystem out{std::move(sys.matrix), std::move(sys.rhs), {}, values, -1};
  for (int i = 0; i < n; ++i)
    if (mask[i]) out.constrained.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// Pressure gauge
// ---------------------------------------------------------------------------

/// Pins pressure dof of cell `cell` to zero (row and column zeroed, unit
/// diagonal). Only valid when the fluid boundary has no Neumann part.
inline void apply_pressure_gauge(const Mesh& mesh, SaddleSystem& sys, PressureGauge mode, int cell = 0) {
  if (mode == PressureGauge::None) return;
  require(!mesh.has_fluid_neumann(), "pressure gauge: not applicable with a fluid Neumann boundary");
  require(cell >= 0 && cell < mesh.num_cells(), "pressure gauge: invalid cell");
  const int k = DofMap(mesh).pressure(cell);
  SparseMatrix& m = sys.matrix;
  for (int col = 0; col < m.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(m, col); it; ++it)
      if (it.row() == k || it.col() == k) it.valueRef() = (it.row() == it.col()) ? 1.0 : 0.0;
  sys.rhs[k] = 0.0;
  sys.pinned_pressure = k;
}

inline PressureGauge default_gauge(const Mesh& mesh) {
  return mesh.has_fluid_neumann() ? PressureGauge::None : PressureGauge::PinThenShift;
}

/// Shifts a piecewise-constant pressure to zero area-weighted mean.
inline void shift_pressure(const Mesh& mesh, Vector& p) {
  double area = 0.0, integral = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const double a = mesh.cell_area(c);
    area += a;
    integral += a * p[c];
  }
  p.array() -= integral / area;
}

}  // namespace egflow
