#pragma once

#include "egflow/ac0.hpp"
#include "egflow/assembly.hpp"
#include "egflow/common.hpp"
#include "egflow/fem.hpp"
#include "egflow/manufactured.hpp"
#include "egflow/mesh.hpp"
#include "egflow/problem.hpp"
#include "egflow/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace egflow {

enum class Method { ST, PR };

inline const char* method_name(Method m) { return m == Method::PR ? "PR" : "ST"; }

/// A mesh plus the problem posed on it; the mesh is shared so simulations
/// built from the setup can outlive it.
struct CaseSetup {
  std::shared_ptr<const Mesh> mesh;
  Problem problem;
  AssemblyConfig assembly;
  PicardConfig picard;

  std::unique_ptr<Simulation> simulation(LinearSolverConfig linear = {}) const {
    return std::make_unique<Simulation>(mesh, problem, assembly, picard, linear);
  }
};

/// Called after every converged time step.
using StepObserver = std::function<void(int step, const State&, const std::vector<double>& residuals)>;

inline int step_count(double dt, double tf) {
  require(dt > 0.0 && tf > 0.0, "time stepping: dt and tf must be positive");
  const int n = static_cast<int>(std::lround(tf / dt));
  require(n >= 1 && std::abs(n * dt - tf) < 1e-9 * tf, "time stepping: tf must be a multiple of dt");
  return n;
}

/// Backward Euler from the initial state; throws PicardFailure on a failed step.
inline State run_time_loop(Simulation& sim, int steps, const StepObserver& observer = {}) {
  State s = sim.initial_state();
  for (int k = 1; k <= steps; ++k) {
    s = sim.backward_euler_step(s);
    if (observer) observer(k, s, sim.last_residuals());
  }
  return s;
}

/// max over cells of |div R u_h|.
inline double max_reconstructed_divergence(const Mesh& mesh, const EGVelocityField& u) {
  const ReconstructionOperator op(mesh);
  const ReconstructedField r = op.apply(u);
  double m = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) m = std::max(m, std::abs(op.divergence(r, c)));
  return m;
}

// ---------------------------------------------------------------------------
// Manufactured convergence study
// ---------------------------------------------------------------------------

struct ConvergenceConfig {
  std::string manufactured = "homogeneous";
  double Re = 1.0;
  Method method = Method::PR;
  int base_n = 8;
  int levels = 4;
  double distortion = 0.3;
  double dt = 0.1;
  double tf = 1.0;
  double alpha = 6.0;
  double zeta = 1.0;
  PicardConfig picard;
};

struct LevelResult {
  int n = 0;
  double h = 0.0;
  double velocity_error = 0.0;
  double pressure_error = 0.0;
  double max_divergence = 0.0;  // PR only
  std::vector<int> iterations;  // Picard iterations per step
  bool converged = true;        // false: errors are NaN, failure says why
  std::string failure;
};

struct ConvergenceReport {
  ConvergenceConfig config;
  std::vector<LevelResult> levels;

  /// log2(e_H / e_h) between consecutive levels (NaN next to a failed level).
  std::vector<double> velocity_rates() const { return rates(&LevelResult::velocity_error); }
  std::vector<double> pressure_rates() const { return rates(&LevelResult::pressure_error); }

 private:
  std::vector<double> rates(double LevelResult::*field) const {
    std::vector<double> r;
    for (std::size_t k = 1; k < levels.size(); ++k)
      r.push_back(std::log2(levels[k - 1].*field / levels[k].*field));
    return r;
  }
};

inline CaseSetup manufactured_setup(const ConvergenceConfig& cfg, int n) {
  CaseSetup s;
  s.mesh = std::make_shared<const Mesh>(manufactured_mesh(n, cfg.distortion));
  s.problem = manufactured_problem(manufactured_case(cfg.manufactured), cfg.Re);
  s.assembly.Re = cfg.Re;
  s.assembly.Ri = 0.0;
  s.assembly.dt = cfg.dt;
  s.assembly.alpha = cfg.alpha;
  s.assembly.zeta = cfg.zeta;
  s.assembly.use_reconstruction = cfg.method == Method::PR;
  s.picard = cfg.picard;
  return s;
}

inline ConvergenceReport run_convergence(const ConvergenceConfig& cfg, const StepObserver& observer = {}) {
  require(cfg.levels >= 1 && cfg.base_n >= 1, "convergence: levels and base_n must be positive");
  const ManufacturedCase mc = manufactured_case(cfg.manufactured);
  const int steps = step_count(cfg.dt, cfg.tf);
  ConvergenceReport report{cfg, {}};
  for (int l = 0; l < cfg.levels; ++l) {
    const int n = cfg.base_n << l;
    const CaseSetup setup = manufactured_setup(cfg, n);
    auto sim = setup.simulation();
    LevelResult lr;
    lr.n = n;
    lr.h = 1.0 / n;
    State s;
    try {
      s = run_time_loop(*sim, steps, [&](int k, const State& st, const std::vector<double>& res) {
        lr.iterations.push_back(static_cast<int>(res.size()));
        if (observer) observer(k, st, res);
      });
    } catch (const PicardFailure& e) {
      lr.converged = false;
      lr.failure = e.what();
      lr.velocity_error = lr.pressure_error = lr.max_divergence = std::numeric_limits<double>::quiet_NaN();
      report.levels.push_back(std::move(lr));
      continue;
    }
    lr.velocity_error = velocity_l2_error(*setup.mesh, s.velocity, mc.velocity, s.time);
    lr.pressure_error = pressure_l2_error(*setup.mesh, s.pressure, mc.pressure, s.time);
    if (cfg.method == Method::PR) lr.max_divergence = max_reconstructed_divergence(*setup.mesh, s.velocity);
    report.levels.push_back(std::move(lr));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Differentially heated cavity
// ---------------------------------------------------------------------------

enum class NusseltMethod { Gradient, ConsistentFlux };

struct CavityConfig {
  double Ra = 1e3;
  double Re = 1.408;
  double Pr = 0.71;
  int n = 64;
  double dt = 0.01;
  double tf = 1.0;
  Method method = Method::PR;
  double alpha = 6.0;
  double zeta = 1.0;
  NusseltMethod nusselt = NusseltMethod::ConsistentFlux;
  PicardConfig picard;

  double Ri() const { return Ra / (Re * Re * Pr); }
};

struct CavityQuantities {
  double U_max = 0.0, y_max = 0.0;
  double V_max = 0.0, x_max = 0.0;
  double Nu0 = 0.0;
};

struct CavityReport {
  CavityConfig config;
  CavityQuantities quantities;
  std::vector<std::vector<double>> residuals;  // per step
  double max_divergence = 0.0;
  State state;
};

inline Mesh cavity_mesh(int n) {
  return build_uniform_quad_mesh(n, n)
      .with_conditions("top", FluidBc::Dirichlet, HeatBc::Neumann)
      .with_conditions("bottom", FluidBc::Dirichlet, HeatBc::Neumann);
}

inline CaseSetup cavity_setup(const CavityConfig& cfg) {
  require(cfg.Ra > 0.0, "cavity: Ra must be positive");
  require(cfg.n >= 1, "cavity: n must be positive");
  CaseSetup s;
  s.mesh = std::make_shared<const Mesh>(cavity_mesh(cfg.n));
  Problem& pb = s.problem;
  pb.boundary["*"].velocity = constant_vector(Vec2::Zero());
  pb.boundary["left"].temperature = constant_scalar(1.0);
  pb.boundary["right"].temperature = constant_scalar(0.0);
  pb.boundary["top"].heat_flux = constant_scalar(0.0);
  pb.boundary["bottom"].heat_flux = constant_scalar(0.0);
  AssemblyConfig& a = s.assembly;
  a.Re = cfg.Re;
  a.Pr = cfg.Pr;
  a.Ri = cfg.Ri();
  a.dt = cfg.dt;
  a.alpha = cfg.alpha;
  a.zeta = cfg.zeta;
  a.use_reconstruction = cfg.method == Method::PR;
  s.picard = cfg.picard;
  return s;
}

namespace detail {

// Maximum of a scalar function on [a, b]: dense sampling, then golden-section
// refinement around the best sample.
inline std::pair<double, double> line_maximum(const std::function<double(double)>& f, double a, double b,
                                              int samples) {
  double best = -std::numeric_limits<double>::infinity(), arg = a;
  int kbest = 0;
  const double step = (b - a) / samples;
  for (int k = 0; k <= samples; ++k) {
    const double s = a + k * step;
    const double v = f(s);
    if (v > best) {
      best = v;
      arg = s;
      kbest = k;
    }
  }
  double lo = std::max(a, a + (kbest - 1) * step), hi = std::min(b, a + (kbest + 1) * step);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - g * (hi - lo), d = lo + g * (hi - lo);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 60 && hi - lo > 1e-12; ++it) {
    if (fc > fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - g * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + g * (hi - lo);
      fd = f(d);
    }
  }
  for (const auto& [s, v] : {std::pair{c, fc}, std::pair{d, fd}})
    if (v > best) {
      best = v;
      arg = s;
    }
  return {best, arg};
}

}  // namespace detail

/// Nu_0 = int_0^1 -d theta/dx dy at x = 0 from the one-sided Q1 gradient.
inline double nusselt_gradient(const Mesh& mesh, const Vector& theta, const std::string& label = "left") {
  const auto rule = quadrature_rule(QuadratureKind::Edge, 5);
  double nu = 0.0;
  int found = 0;
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const Edge& ed = mesh.edge(e);
    if (!ed.is_boundary() || mesh.edge_tag(e).label != label) continue;
    ++found;
    const CellGeometry geo(mesh, ed.plus);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double t = 0.5 * (rule.points[q].x() + 1.0);
      const CellPoint p = cell_point(geo, edge_ref_point(mesh, ed.plus, e, t));
      nu -= 0.5 * rule.weights[q] * ed.length * q1_gradient(mesh, theta, ed.plus, p).x();
    }
  }
  require(found > 0, "nusselt: no boundary edges labelled '" + label + "'");
  return nu;
}

/// Nu_0 from the residual of the discrete heat equation at the Dirichlet
/// vertices of x = 0 (the variationally consistent boundary flux), divided by
/// kappa. Needs the temperature of the previous step and the advecting field.
inline double nusselt_consistent(const Discretization& d, const Problem& pb, const AssemblyConfig& cfg,
                                 const EGVelocityField& beta, const Vector& theta_old, const Vector& theta, double t,
                                 const std::string& label = "left") {
  const Mesh& mesh = d.mesh();
  // Reassemble with the wall treated as Neumann with zero data: the unconstrained
  // residual at its vertices is the discrete normal flux kappa d theta/dn.
  const int tag = mesh.find_tag(label);
  require(tag >= 0, "nusselt: no boundary edges labelled '" + label + "'");
  const Mesh open = mesh.with_conditions(label, mesh.tags()[tag].fluid, HeatBc::Neumann);
  Problem p2 = pb;
  p2.boundary[label].heat_flux = constant_scalar(0.0);
  const Discretization d2(open, cfg.cell_degree, cfg.edge_degree);
  const LinearSystem sys = assemble_heat(d2, p2, cfg, beta, theta_old, t);
  const Vector r = sys.matrix * theta - sys.rhs;
  std::vector<char> on_wall(mesh.num_vertices(), 0);
  for (int e = 0; e < mesh.num_edges(); ++e)
    if (mesh.edge(e).is_boundary() && mesh.edge_tag(e).label == label)
      for (int v : mesh.edge(e).vertices) on_wall[v] = 1;
  double flux = 0.0;
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (on_wall[v]) flux += r[v];
  // sum_i r_i = int kappa d theta/dn with n = (-1, 0) on x = 0
  return flux / cfg.kappa();
}

inline CavityQuantities cavity_quantities(const Mesh& mesh, const State& s) {
  require(s.temperature.size() == mesh.num_vertices() && s.velocity.cg.size() == 2 * mesh.num_vertices(),
          "cavity quantities: state does not match the mesh");
  const PointLocator loc(mesh);
  const int samples = 8 * static_cast<int>(std::ceil(std::sqrt(static_cast<double>(mesh.num_cells()))));
  CavityQuantities q;
  std::tie(q.U_max, q.y_max) = detail::line_maximum(
      [&](double y) { return probe_eg(mesh, loc, s.velocity, Vec2(0.5, y)).x(); }, 0.0, 1.0, samples);
  std::tie(q.V_max, q.x_max) = detail::line_maximum(
      [&](double x) { return probe_eg(mesh, loc, s.velocity, Vec2(x, 0.5)).y(); }, 0.0, 1.0, samples);
  q.Nu0 = nusselt_gradient(mesh, s.temperature);
  return q;
}

inline CavityReport run_cavity(const CavityConfig& cfg, const StepObserver& observer = {}) {
  const CaseSetup setup = cavity_setup(cfg);
  auto sim = setup.simulation();
  const int steps = step_count(cfg.dt, cfg.tf);
  CavityReport report;
  report.config = cfg;
  State prev = sim->initial_state();
  State s = prev;
  for (int k = 1; k <= steps; ++k) {
    prev = std::move(s);
    s = sim->backward_euler_step(prev);
    report.residuals.push_back(sim->last_residuals());
    if (observer) observer(k, s, sim->last_residuals());
  }
  report.quantities = cavity_quantities(*setup.mesh, s);
  if (cfg.nusselt == NusseltMethod::ConsistentFlux)
    report.quantities.Nu0 = nusselt_consistent(sim->discretization(), setup.problem, setup.assembly, s.velocity,
                                               prev.temperature, s.temperature, s.time);
  if (cfg.method == Method::PR) report.max_divergence = max_reconstructed_divergence(*setup.mesh, s.velocity);
  report.state = std::move(s);
  return report;
}

// ---------------------------------------------------------------------------
// Flow through a pore-scale domain
// ---------------------------------------------------------------------------

struct PoreConfig {
  double Re = 10.0;
  double Ri = 0.0;
  double Pr = 0.71;
  int n = 64;
  std::vector<Hole> holes = default_pore_layout();
  double dt = 0.05;
  double tf = 2.0;
  double stabilization_c = 0.1;
  Method method = Method::PR;
  double alpha = 6.0;
  double zeta = 1.0;
  PicardConfig picard = [] {
    PicardConfig p;
    p.mode = PicardMode::Anderson;
    p.depth = 10;
    return p;
  }();
};

struct PoreReport {
  PoreConfig config;
  std::vector<double> times;
  std::vector<double> flux;  // F_theta at the outlet
  std::vector<std::vector<double>> residuals;
  State state;
};

inline CaseSetup pore_setup(const PoreConfig& cfg) {
  CaseSetup s;
  s.mesh = std::make_shared<const Mesh>(build_pore_mesh(cfg.n, cfg.n, cfg.holes)
                                            .with_conditions("right", FluidBc::Neumann, HeatBc::Neumann)
                                            .with_conditions("top", FluidBc::Dirichlet, HeatBc::Neumann)
                                            .with_conditions("bottom", FluidBc::Dirichlet, HeatBc::Neumann)
                                            .with_conditions("pore", FluidBc::Dirichlet, HeatBc::Neumann));
  Problem& pb = s.problem;
  pb.boundary["*"] = BoundaryData{constant_vector(Vec2::Zero()), constant_vector(Vec2::Zero()),
                                  constant_scalar(0.0), constant_scalar(0.0)};
  pb.boundary["left"].velocity = [](const Vec2& x, double) { return Vec2(4.0 * x.y() * (1.0 - x.y()), 0.0); };
  pb.boundary["pore"].heat_flux = constant_scalar(1.0);
  AssemblyConfig& a = s.assembly;
  a.Re = cfg.Re;
  a.Ri = cfg.Ri;
  a.Pr = cfg.Pr;
  a.dt = cfg.dt;
  a.alpha = cfg.alpha;
  a.zeta = cfg.zeta;
  a.stabilization_c = cfg.stabilization_c;
  a.use_reconstruction = cfg.method == Method::PR;
  s.picard = cfg.picard;
  return s;
}

/// F_theta = int theta u.n over the boundary edges with the given label, u
/// taken as the EG field.
inline double convective_heat_flux(const Mesh& mesh, const State& s, const std::string& label = "right") {
  const auto rule = quadrature_rule(QuadratureKind::Edge, 7);
  double f = 0.0;
  int found = 0;
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const Edge& ed = mesh.edge(e);
    if (!ed.is_boundary() || mesh.edge_tag(e).label != label) continue;
    ++found;
    const CellGeometry geo(mesh, ed.plus);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double t = 0.5 * (rule.points[q].x() + 1.0);
      const CellPoint p = cell_point(geo, edge_ref_point(mesh, ed.plus, e, t));
      const double th = q1_value(mesh, s.temperature, ed.plus, p);
      f += 0.5 * rule.weights[q] * ed.length * th * eg_value(mesh, s.velocity, ed.plus, p).dot(ed.normal);
    }
  }
  require(found > 0, "heat flux: no boundary edges labelled '" + label + "'");
  return f;
}

/// As convective_heat_flux with u.n replaced by the reconstructed normal flux.
inline double convective_heat_flux_reconstructed(const Mesh& mesh, const State& s,
                                                 const std::string& label = "right") {
  const ReconstructionOperator op(mesh);
  const ReconstructedField r = op.apply(s.velocity);
  const auto rule = quadrature_rule(QuadratureKind::Edge, 3);
  double f = 0.0;
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const Edge& ed = mesh.edge(e);
    if (!ed.is_boundary() || mesh.edge_tag(e).label != label) continue;
    const CellGeometry geo(mesh, ed.plus);
    double mean = 0.0;
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double t = 0.5 * (rule.points[q].x() + 1.0);
      mean += 0.5 * rule.weights[q] * q1_value(mesh, s.temperature, ed.plus,
                                               cell_point(geo, edge_ref_point(mesh, ed.plus, e, t)));
    }
    f += mean * r.edge_flux[e];
  }
  return f;
}

inline PoreReport run_pore(const PoreConfig& cfg, const StepObserver& observer = {}) {
  const CaseSetup setup = pore_setup(cfg);
  auto sim = setup.simulation();
  PoreReport report;
  report.config = cfg;
  report.state = run_time_loop(*sim, step_count(cfg.dt, cfg.tf), [&](int k, const State& s, const auto& res) {
    report.times.push_back(s.time);
    report.flux.push_back(convective_heat_flux(*setup.mesh, s));
    report.residuals.push_back(res);
    if (observer) observer(k, s, res);
  });
  return report;
}

}  // namespace egflow
