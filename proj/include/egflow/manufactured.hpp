#pragma once

#include "egflow/common.hpp"
#include "egflow/fem.hpp"
#include "egflow/mesh.hpp"
#include "egflow/problem.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <string>

namespace egflow {

/// Exact velocity/pressure pair with hand-derived derivatives. The body force
/// and traction follow from the momentum equation with 2 Re^-1 div eps(u) = Re^-1 lap u
/// (both fields are divergence free).
struct ManufacturedCase {
  using VecFn = std::function<Vec2(const Vec2&, double)>;
  using MatFn = std::function<Mat2(const Vec2&, double)>;

  std::string name;
  VecFn velocity;
  MatFn gradient;  // G(i, j) = d u_i / d x_j
  VecFn time_derivative;
  VecFn laplacian;
  ScalarFn pressure;
  VecFn pressure_gradient;

  Vec2 force(const Vec2& x, double t, double Re) const {
    return time_derivative(x, t) + gradient(x, t) * velocity(x, t) - laplacian(x, t) / Re + pressure_gradient(x, t);
  }

  Vec2 traction(const Vec2& x, double t, double Re, const Vec2& n) const {
    const Mat2 g = gradient(x, t);
    return ((g + g.transpose()) / Re - pressure(x, t) * Mat2::Identity()) * n;
  }
};

namespace detail {
// A(s) = s^2 (s - 1)^2 and its derivatives
inline double a0(double s) { return s * s * (s - 1) * (s - 1); }
inline double a1(double s) { return 2 * s * (s - 1) * (2 * s - 1); }
inline double a2(double s) { return 12 * s * s - 12 * s + 2; }
inline double a3(double s) { return 24 * s - 12; }
}  // namespace detail

/// u = t (A(x) A'(y), -A'(x) A(y)) / 2, p = (x - 1)(y - 1).
inline ManufacturedCase homogeneous_case() {
  using namespace detail;
  ManufacturedCase m;
  m.name = "homogeneous";
  m.velocity = [](const Vec2& x, double t) {
    return Vec2(0.5 * t * a0(x.x()) * a1(x.y()), -0.5 * t * a1(x.x()) * a0(x.y()));
  };
  m.gradient = [](const Vec2& x, double t) {
    Mat2 g;
    g << a1(x.x()) * a1(x.y()), a0(x.x()) * a2(x.y()), -a2(x.x()) * a0(x.y()), -a1(x.x()) * a1(x.y());
    return Mat2(0.5 * t * g);
  };
  m.time_derivative = [](const Vec2& x, double) {
    return Vec2(0.5 * a0(x.x()) * a1(x.y()), -0.5 * a1(x.x()) * a0(x.y()));
  };
  m.laplacian = [](const Vec2& x, double t) {
    const double X = x.x(), Y = x.y();
    return Vec2(0.5 * t * (a2(X) * a1(Y) + a0(X) * a3(Y)), -0.5 * t * (a3(X) * a0(Y) + a1(X) * a2(Y)));
  };
  m.pressure = [](const Vec2& x, double) { return (x.x() - 1) * (x.y() - 1); };
  m.pressure_gradient = [](const Vec2& x, double) { return Vec2(x.y() - 1, x.x() - 1); };
  return m;
}

/// u = 0.1 t (sin x sin y, cos x cos y), p = sin(pi x) cos(pi y).
inline ManufacturedCase nonhomogeneous_case() {
  using std::cos, std::sin;
  constexpr double pi = std::numbers::pi;
  ManufacturedCase m;
  m.name = "nonhomogeneous";
  m.velocity = [](const Vec2& x, double t) {
    return Vec2(0.1 * t * sin(x.x()) * sin(x.y()), 0.1 * t * cos(x.x()) * cos(x.y()));
  };
  m.gradient = [](const Vec2& x, double t) {
    Mat2 g;
    g << cos(x.x()) * sin(x.y()), sin(x.x()) * cos(x.y()), -sin(x.x()) * cos(x.y()), -cos(x.x()) * sin(x.y());
    return Mat2(0.1 * t * g);
  };
  m.time_derivative = [](const Vec2& x, double) {
    return Vec2(0.1 * sin(x.x()) * sin(x.y()), 0.1 * cos(x.x()) * cos(x.y()));
  };
  m.laplacian = [](const Vec2& x, double t) {
    return Vec2(-0.2 * t * sin(x.x()) * sin(x.y()), -0.2 * t * cos(x.x()) * cos(x.y()));
  };
  m.pressure = [](const Vec2& x, double) { return sin(pi * x.x()) * cos(pi * x.y()); };
  m.pressure_gradient = [](const Vec2& x, double) {
    return Vec2(pi * cos(pi * x.x()) * cos(pi * x.y()), -pi * sin(pi * x.x()) * sin(pi * x.y()));
  };
  return m;
}

inline ManufacturedCase manufactured_case(const std::string& name) {
  if (name == "homogeneous") return homogeneous_case();
  if (name == "nonhomogeneous") return nonhomogeneous_case();
  throw Error("unknown manufactured case '" + name + "'");
}

/// Trapezoid mesh of the unit square with traction on x = 1 and velocity
/// Dirichlet data elsewhere.
inline Mesh manufactured_mesh(int n, double distortion = 0.3) {
  return build_trapezoid_mesh(n, n, distortion).with_conditions("right", FluidBc::Neumann, HeatBc::Dirichlet);
}

inline Problem manufactured_problem(const ManufacturedCase& mc, double Re) {
  Problem pb;
  pb.solve_heat = false;
  pb.boundary["*"].velocity = mc.velocity;
  pb.boundary["right"].traction = [mc, Re](const Vec2& x, double t) { return mc.traction(x, t, Re, Vec2(1, 0)); };
  pb.body_force = [mc, Re](const Vec2& x, double t) { return mc.force(x, t, Re); };
  pb.initial_velocity = [mc](const Vec2& x, double) { return mc.velocity(x, 0.0); };
  return pb;
}

/// ||u - u_h|| over the mesh.
inline double velocity_l2_error(const Mesh& mesh, const EGVelocityField& u, const VectorFn& exact, double t,
                                int degree = 9) {
  const auto rule = quadrature_rule(QuadratureKind::Cell, degree);
  double s = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c)
    for (const auto& p : cell_points(mesh, c, rule)) s += p.jxw * (eg_value(mesh, u, c, p) - exact(p.x, t)).squaredNorm();
  return std::sqrt(s);
}

/// ||p - p_h|| for a cellwise constant p_h.
inline double pressure_l2_error(const Mesh& mesh, const Vector& p, const ScalarFn& exact, double t, int degree = 9) {
  const auto rule = quadrature_rule(QuadratureKind::Cell, degree);
  double s = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c)
    for (const auto& q : cell_points(mesh, c, rule)) s += q.jxw * std::pow(p[c] - exact(q.x, t), 2);
  return std::sqrt(s);
}

}  // namespace egflow
