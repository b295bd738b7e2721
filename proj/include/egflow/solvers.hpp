#pragma once

#include "egflow/anderson.hpp"
#include "egflow/assembly.hpp"
#include "egflow/common.hpp"
#include "egflow/fem.hpp"
#include "egflow/linear_solver.hpp"
#include "egflow/problem.hpp"

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace egflow {

enum class PicardMode { Plain, Anderson };

struct PicardConfig {
  double tol = 1e-8;
  int max_iters = 100;
  PicardMode mode = PicardMode::Plain;
  int depth = 10;
  double relaxation = 1.0;
  /// Use ||du|| + ||dp|| + ||dtheta|| instead of the relative N_r.
  bool absolute = false;

  void validate() const {
    require(tol > 0.0, "picard: tol must be positive");
    require(max_iters >= 1, "picard: max_iters must be at least 1");
    require(depth >= 0, "picard: anderson depth must be non-negative");
    require(relaxation > 0.0, "picard: relaxation must be positive");
  }
};

struct StepResult {
  State state;
  std::vector<double> residuals;  // N_r per iteration
  bool converged = false;
  int iterations() const { return static_cast<int>(residuals.size()); }
};

/// Raised when the nonlinear iteration does not converge; carries the N_r history.
class PicardFailure : public Error {
 public:
  PicardFailure(const std::string& msg, std::vector<double> history) : Error(msg), history_(std::move(history)) {}
  const std::vector<double>& history() const { return history_; }

 private:
  std::vector<double> history_;
};

/// Discrete L2 norms of the (u, p, theta) components.
class StateNorm {
 public:
  explicit StateNorm(const Discretization& d) : d_(&d) {}

  std::array<double, 3> components(const State& s) const {
    const Vector u = s.velocity.packed();
    const double nu = u.dot(d_->velocity_mass() * u);
    const double np = s.pressure.cwiseProduct(s.pressure).dot(d_->cell_areas());
    const double nt = s.temperature.dot(d_->temperature_mass() * s.temperature);
    return {std::sqrt(std::max(nu, 0.0)), std::sqrt(std::max(np, 0.0)), std::sqrt(std::max(nt, 0.0))};
  }

  double operator()(const State& s) const {
    const auto c = components(s);
    return std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
  }

 private:
  const Discretization* d_;
};

inline State difference(const State& a, const State& b) {
  State d;
  d.velocity.cg = a.velocity.cg - b.velocity.cg;
  d.velocity.dg = a.velocity.dg - b.velocity.dg;
  d.pressure = a.pressure - b.pressure;
  d.temperature = a.temperature - b.temperature;
  d.time = a.time;
  return d;
}

/// Backward Euler in time, decoupled Picard (optionally Anderson-accelerated)
/// per step: heat with beta = u_{k-1}, then fluid with theta_k.
class Simulation {
 public:
  Simulation(const Mesh& mesh, Problem problem, AssemblyConfig assembly, PicardConfig picard = {},
             LinearSolverConfig linear = {})
      : mesh_(&mesh),
        problem_(std::move(problem)),
        assembly_(assembly),
        picard_(picard),
        disc_(std::make_unique<Discretization>(mesh, assembly.cell_degree, assembly.edge_degree)),
        norm_(*disc_),
        heat_solver_(linear),
        fluid_solver_(linear) {
    assembly_.validate();
    picard_.validate();
    problem_.validate(mesh);
    gauge_ = default_gauge(mesh);
  }

  /// Shares ownership of the mesh, so the simulation may outlive the caller's handle.
  Simulation(std::shared_ptr<const Mesh> mesh, Problem problem, AssemblyConfig assembly, PicardConfig picard = {},
             LinearSolverConfig linear = {})
      : Simulation(*require_mesh(mesh), std::move(problem), assembly, picard, linear) {
    owner_ = std::move(mesh);
  }

  const Mesh& mesh() const { return *mesh_; }
  const Discretization& discretization() const { return *disc_; }
  const Problem& problem() const { return problem_; }
  const AssemblyConfig& assembly() const { return assembly_; }
  const PicardConfig& picard() const { return picard_; }
  AssemblyConfig& assembly() { return assembly_; }
  PicardConfig& picard() { return picard_; }
  const StateNorm& norm() const { return norm_; }

  /// Receives "heat" and "fluid" before each corresponding solve.
  std::function<void(std::string_view)> observer;

  State initial_state() const {
    State s(*mesh_);
    s.velocity = interpolate_eg(*mesh_, problem_.initial_velocity, 0.0);
    s.temperature = interpolate_q1(*mesh_, problem_.initial_temperature, 0.0);
    return s;
  }

  /// One decoupled Picard pass at time t: the map g(x_prev).
  State picard_iterate(const State& x_prev, const State& old, double t) {
    State next(*mesh_);
    next.time = t;
    if (problem_.solve_heat) {
      notify("heat");
      const LinearSystem heat = assemble_heat(*disc_, problem_, assembly_, x_prev.velocity, old.temperature, t);
      next.temperature = heat_solver_.solve(heat.matrix, heat.rhs);
    } else {
      next.temperature = x_prev.temperature;
    }
    notify("fluid");
    SaddleSystem fluid = assemble_fluid(*disc_, problem_, assembly_, x_prev.velocity, old.velocity, next.temperature, t);
    apply_pressure_gauge(*mesh_, fluid, gauge_);
    const Vector x = fluid_solver_.solve(fluid.matrix, fluid.rhs);
    const DofMap& dofs = disc_->dofs();
    next.velocity = EGVelocityField::from_packed(*mesh_, x.head(dofs.num_velocity()));
    next.pressure = x.segment(dofs.num_velocity(), dofs.num_pressure());
    if (gauge_ == PressureGauge::PinThenShift) shift_pressure(*mesh_, next.pressure);
    return next;
  }

  /// Convergence measure between successive iterates.
  double residual(const State& current, const State& previous) const {
    const State d = difference(current, previous);
    if (picard_.absolute) {
      const auto c = norm_.components(d);
      return c[0] + c[1] + c[2];
    }
    const double num = norm_(d);
    if (num == 0.0) return 0.0;
    const double den = norm_(current);
    return den > 0.0 ? num / den : std::numeric_limits<double>::infinity();
  }

  /// Advances one step from `old`; never throws on non-convergence.
  StepResult step(const State& old) {
    const double t = old.time + assembly_.dt;
    StepResult result;
    State x = old;
    x.time = t;
    std::unique_ptr<AndersonAccelerator> aa;
    if (picard_.mode == PicardMode::Anderson)
      aa = std::make_unique<AndersonAccelerator>(picard_.depth, picard_.relaxation);
    for (int k = 1; k <= picard_.max_iters; ++k) {
      State g = picard_iterate(x, old, t);
      State next;
      if (aa) {
        next = unpack(aa->update(pack(x), pack(g)), t);
      } else {
        next = std::move(g);
      }
      const double nr = residual(next, x);
      result.residuals.push_back(nr);
      x = std::move(next);
      if (!std::isfinite(nr)) break;
      if (nr <= picard_.tol) {
        result.converged = true;
        break;
      }
    }
    result.state = std::move(x);
    return result;
  }

  /// Advances one step; throws PicardFailure with the residual history on failure.
  State backward_euler_step(const State& old) {
    StepResult r = step(old);
    if (!r.converged)
      throw PicardFailure("Picard iteration did not converge at t = " + std::to_string(old.time + assembly_.dt),
                          r.residuals);
    last_ = std::move(r.residuals);
    return std::move(r.state);
  }

  const std::vector<double>& last_residuals() const { return last_; }

  /// Concatenation [u | p | theta].
  Vector pack(const State& s) const {
    const DofMap& dofs = disc_->dofs();
    Vector v(dofs.num_fluid() + dofs.num_temperature());
    v << s.velocity.cg, s.velocity.dg, s.pressure, s.temperature;
    return v;
  }

  State unpack(const Vector& v, double t) const {
    const DofMap& dofs = disc_->dofs();
    State s;
    s.velocity = EGVelocityField::from_packed(*mesh_, v.head(dofs.num_velocity()));
    s.pressure = v.segment(dofs.num_velocity(), dofs.num_pressure());
    s.temperature = v.tail(dofs.num_temperature());
    s.time = t;
    return s;
  }

 private:
  void notify(std::string_view event) {
    if (observer) observer(event);
  }

  static const std::shared_ptr<const Mesh>& require_mesh(const std::shared_ptr<const Mesh>& m) {
    require(m != nullptr, "simulation: null mesh");
    return m;
  }

  std::shared_ptr<const Mesh> owner_;
  const Mesh* mesh_;
  Problem problem_;
  AssemblyConfig assembly_;
  PicardConfig picard_;
  std::unique_ptr<Discretization> disc_;
  StateNorm norm_;
  LinearSolver heat_solver_;
  LinearSolver fluid_solver_;
  PressureGauge gauge_ = PressureGauge::None;
  std::vector<double> last_;
};

}  // namespace egflow
