#include "egflow/anderson.hpp"
#include "egflow/linear_solver.hpp"
#include "egflow/solvers.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace egflow;

namespace {

Problem zero_problem() {
  Problem pb;
  pb.boundary["*"] = BoundaryData{constant_vector(Vec2::Zero()), constant_vector(Vec2::Zero()),
                                  constant_scalar(0.0), constant_scalar(0.0)};
  return pb;
}

SparseMatrix to_sparse(const Eigen::MatrixXd& a) { return a.sparseView(); }

// Heated-wall box: enough physics to make the Picard map nontrivial.
Problem heated_box() {
  Problem pb = zero_problem();
  pb.boundary["left"].temperature = constant_scalar(1.0);
  pb.boundary["top"].heat_flux = constant_scalar(0.0);
  pb.boundary["bottom"].heat_flux = constant_scalar(0.0);
  return pb;
}

Mesh heated_mesh(int n) {
  return build_uniform_quad_mesh(n, n)
      .with_conditions("top", FluidBc::Dirichlet, HeatBc::Neumann)
      .with_conditions("bottom", FluidBc::Dirichlet, HeatBc::Neumann);
}

}  // namespace

TEST(LinearSolve, Identity) {
  const Vector b = Vector::LinSpaced(5, 1.0, 5.0);
  EXPECT_EQ(solve_linear(to_sparse(Eigen::MatrixXd::Identity(5, 5)), b), b);
}

TEST(LinearSolve, TwoByTwo) {
  Eigen::MatrixXd a(2, 2);
  a << 2, 1, 1, 2;
  const Vector x = solve_linear(to_sparse(a), Vector::Constant(2, 3.0));
  EXPECT_NEAR(x[0], 1.0, 1e-14);
  EXPECT_NEAR(x[1], 1.0, 1e-14);
}

TEST(LinearSolve, SingularReported) {
  Eigen::MatrixXd a(2, 2);
  a << 1, 1, 1, 1;
  EXPECT_THROW(solve_linear(to_sparse(a), Vector::Constant(2, 1.0)), Error);
}

TEST(LinearSolve, ReusesPatternAcrossValues) {
  LinearSolver s;
  Eigen::MatrixXd a(3, 3);
  a << 4, 1, 0, 1, 4, 1, 0, 1, 4;
  const Vector b = Vector::Ones(3);
  const Vector x1 = s.solve(to_sparse(a), b);
  const Vector x2 = s.solve(to_sparse(2.0 * a), b);
  EXPECT_LT((x1 - 2.0 * x2).norm(), 1e-14);
  EXPECT_LE(s.last_residual(), 1e-10);
}

TEST(Anderson, FirstStepIsPlainFixedPoint) {
  AndersonAccelerator aa(5);
  const Vector x0 = Vector::Constant(3, 0.25);
  const Vector g0 = Vector::LinSpaced(3, 1.0, 2.0);
  EXPECT_EQ(aa.update(x0, g0), g0);
  AndersonAccelerator damped(5, 0.5);
  EXPECT_LT((damped.update(x0, g0) - (x0 + 0.5 * (g0 - x0))).norm(), 1e-15);
}

TEST(Anderson, ScalarAffineMapExactAtSecondIterate) {
  AndersonAccelerator aa(3);
  const auto g = [](const Vector& x) { return Vector(0.5 * x.array() + 1.0); };
  Vector x = Vector::Zero(1);
  x = aa.update(x, g(x));
  EXPECT_EQ(x[0], 1.0);
  x = aa.update(x, g(x));
  EXPECT_EQ(x[0], 2.0);
}

TEST(Anderson, AffineMapWithinNPlusOne) {
  const int n = 20;
  std::mt19937 rng(11);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = nd(rng);
  a *= 0.9 / a.operatorNorm();
  Vector b(n);
  for (int i = 0; i < n; ++i) b[i] = nd(rng);
  const Vector exact = (Eigen::MatrixXd::Identity(n, n) - a).partialPivLu().solve(b);
  AndersonAccelerator aa(n);
  Vector x = Vector::Zero(n);
  int reached = -1;
  for (int k = 1; k <= n + 1; ++k) {
    x = aa.update(x, a * x + b);
    if ((x - exact).norm() <= 1e-8) {
      reached = k;
      break;
    }
  }
  EXPECT_GT(reached, 0);
  EXPECT_LE(reached, n + 1);
}

TEST(Anderson, DepthZeroMatchesPicardBitwise) {
  const int n = 6;
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(n, n) * 0.1;
  const Vector b = Vector::Ones(n);
  AndersonAccelerator aa(0);
  Vector x = Vector::Zero(n), y = Vector::Zero(n);
  for (int k = 0; k < 10; ++k) {
    x = aa.update(x, a * x + b);
    y = a * y + b;
    EXPECT_EQ(x, y);
  }
}

TEST(Anderson, WindowGrowsThenSaturates) {
  const int n = 30, m = 4;
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(n, n) * 0.05;
  const Vector b = Vector::LinSpaced(n, -1.0, 1.0);
  AndersonAccelerator aa(m);
  Vector x = Vector::Zero(n);
  for (int k = 1; k <= 8; ++k) {
    x = aa.update(x, a * x + b);
    EXPECT_EQ(aa.columns() + aa.dropped() >= std::min(k - 1, m), true);
    EXPECT_LE(aa.columns(), m);
    if (aa.dropped() == 0) EXPECT_EQ(aa.columns(), std::min(k - 1, m));
  }
}

TEST(Anderson, RankDeficientHistoryDropsColumns) {
  // a map that is constant makes every residual difference equal to -dx
  AndersonAccelerator aa(3);
  const Vector c = Vector::Constant(2, 1.0);
  Vector x = Vector::Zero(2);
  for (int k = 0; k < 4; ++k) x = aa.update(x, c);
  EXPECT_TRUE(x.allFinite());
  EXPECT_LT((x - c).norm(), 1e-12);
}

TEST(Picard, ZeroProblemStaysZeroInOneIteration) {
  const Mesh m = build_uniform_quad_mesh(4, 4);
  Simulation sim(m, zero_problem(), AssemblyConfig{});
  const StepResult r = sim.step(sim.initial_state());
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations(), 1);
  EXPECT_EQ(r.residuals[0], 0.0);
  EXPECT_EQ(r.state.velocity.packed().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.state.temperature.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Picard, StokesRegimeConfirmedOnSecondPass) {
  // the second pass changes the frozen advecting field from 0 to u_1, which
  // the Stokes momentum equation ignores, so it reproduces u_1 exactly
  const Mesh m = build_trapezoid_mesh(4, 4, 0.3);
  Problem pb = zero_problem();
  pb.boundary["*"].velocity = [](const Vec2& x, double) { return Vec2(x.y() * x.y(), -x.x()); };
  pb.body_force = [](const Vec2& x, double) { return Vec2(std::sin(3 * x.y()), 1.0); };
  AssemblyConfig cfg;
  cfg.Ri = 0.0;
  cfg.fluid_advection = false;
  for (bool pr : {false, true}) {
    cfg.use_reconstruction = pr;
    Simulation sim(m, pb, cfg);
    const StepResult r = sim.step(sim.initial_state());
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.iterations(), 2);
    EXPECT_EQ(r.residuals[1], 0.0);
    EXPECT_NEAR(r.residuals[0], 1.0, 1e-12);
  }
}

TEST(Picard, HeatSolvedBeforeFluid) {
  const Mesh m = heated_mesh(4);
  AssemblyConfig cfg;
  cfg.Ri = 100.0;
  Simulation sim(m, heated_box(), cfg);
  std::vector<std::string> events;
  sim.observer = [&](std::string_view e) { events.emplace_back(e); };
  const State s0 = sim.initial_state();
  const State s1 = sim.picard_iterate(s0, s0, cfg.dt);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0], "heat");
  EXPECT_EQ(events[1], "fluid");
  // buoyancy used the new temperature: the fluid moves even though theta_old = 0
  EXPECT_GT(s1.temperature.maxCoeff(), 0.5);
  EXPECT_GT(s1.velocity.packed().cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Picard, ConvergedStateIsFixedPoint) {
  const Mesh m = heated_mesh(6);
  AssemblyConfig cfg;
  cfg.Ri = 500.0;
  PicardConfig pc;
  pc.tol = 1e-12;
  Simulation sim(m, heated_box(), cfg, pc);
  const State s0 = sim.initial_state();
  const State s1 = sim.backward_euler_step(s0);
  const State again = sim.picard_iterate(s1, s0, s1.time);
  EXPECT_LT(sim.norm()(difference(again, s1)), 1e-9 * sim.norm()(s1));
}

TEST(Picard, ResidualDefinition) {
  const Mesh m = heated_mesh(4);
  Simulation sim(m, heated_box(), AssemblyConfig{});
  State a = sim.initial_state(), b = sim.initial_state();
  a.temperature.setConstant(2.0);
  b.temperature.setConstant(1.0);
  // ||a - b|| / ||a|| with constant temperatures over a unit area
  EXPECT_NEAR(sim.residual(a, b), 0.5, 1e-12);
  EXPECT_EQ(sim.residual(a, a), 0.0);
  a.pressure.setConstant(3.0);
  const auto c = sim.norm().components(a);
  EXPECT_NEAR(c[1], 3.0, 1e-12);
  EXPECT_NEAR(c[2], 2.0, 1e-12);
}

TEST(Picard, ResidualHistoryStopsAtTolerance) {
  const Mesh m = heated_mesh(6);
  AssemblyConfig cfg;
  cfg.Ri = 2000.0;
  PicardConfig pc;
  pc.tol = 1e-6;
  Simulation sim(m, heated_box(), cfg, pc);
  const StepResult r = sim.step(sim.initial_state());
  ASSERT_TRUE(r.converged);
  EXPECT_LE(r.residuals.back(), pc.tol);
  for (std::size_t k = 0; k + 1 < r.residuals.size(); ++k) EXPECT_GT(r.residuals[k], pc.tol);
}

TEST(Picard, FailureCarriesHistory) {
  const Mesh m = heated_mesh(6);
  AssemblyConfig cfg;
  cfg.Ri = 2000.0;
  PicardConfig pc;
  pc.max_iters = 2;
  pc.tol = 1e-14;
  Simulation sim(m, heated_box(), cfg, pc);
  try {
    sim.backward_euler_step(sim.initial_state());
    FAIL() << "expected PicardFailure";
  } catch (const PicardFailure& e) {
    EXPECT_EQ(e.history().size(), 2u);
  }
}

TEST(Picard, AndersonDepthZeroMatchesPlain) {
  const Mesh m = heated_mesh(6);
  AssemblyConfig cfg;
  cfg.Ri = 2000.0;
  PicardConfig plain, aa;
  plain.max_iters = aa.max_iters = 6;
  aa.mode = PicardMode::Anderson;
  aa.depth = 0;
  Simulation a(m, heated_box(), cfg, plain), b(m, heated_box(), cfg, aa);
  const StepResult ra = a.step(a.initial_state()), rb = b.step(b.initial_state());
  EXPECT_EQ(ra.residuals, rb.residuals);
  EXPECT_EQ(ra.state.temperature, rb.state.temperature);
  EXPECT_EQ(ra.state.velocity.packed(), rb.state.velocity.packed());
}

TEST(Picard, AndersonConvergesToSameState) {
  const Mesh m = heated_mesh(6);
  AssemblyConfig cfg;
  cfg.Ri = 2000.0;
  PicardConfig plain, aa;
  plain.tol = aa.tol = 1e-10;
  aa.mode = PicardMode::Anderson;
  Simulation a(m, heated_box(), cfg, plain), b(m, heated_box(), cfg, aa);
  const StepResult ra = a.step(a.initial_state()), rb = b.step(b.initial_state());
  ASSERT_TRUE(ra.converged);
  ASSERT_TRUE(rb.converged);
  EXPECT_LE(rb.iterations(), ra.iterations());
  EXPECT_LT(a.norm()(difference(ra.state, rb.state)), 1e-7 * a.norm()(ra.state));
}

TEST(Picard, InvalidConfigRejected) {
  PicardConfig pc;
  pc.tol = 0.0;
  EXPECT_THROW(pc.validate(), Error);
  pc = {};
  pc.max_iters = 0;
  EXPECT_THROW(pc.validate(), Error);
}
