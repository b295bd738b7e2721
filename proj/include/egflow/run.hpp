#pragma once

#include "egflow/bench.hpp"
#include "egflow/io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>

namespace egflow {

/// Everything a command-line run needs. Optional fields are filled with the
/// defaults of the selected case by resolved().
struct RunConfig {
  std::string case_name = "cavity";
  std::optional<double> ra, re, ri, pr, dt, tf;
  std::optional<int> n;
  int levels = 4;
  std::string method;  // st | pr | both; empty: case default
  std::string out = "egflow_out";

  std::string manufactured = "homogeneous";
  double distortion = 0.3;
  double alpha = 6.0;
  double zeta = 1.0;
  std::optional<double> stabilization;
  std::string nusselt = "consistent";
  int vtk_every = 0;  // 0: final state only

  double picard_tol = 1e-8;
  int picard_max_iters = 100;
  std::string picard_mode;  // plain | anderson; empty: case default
  int picard_depth = 10;
  double picard_relaxation = 1.0;
  bool picard_absolute = false;

  std::vector<Hole> holes = default_pore_layout();
  std::string mesh_file;  // custom case; empty: uniform n x n unit square
  bool solve_heat = true;
  Vec2 force = Vec2::Zero();
  double heat_source = 0.0;
  std::map<std::string, std::string> bc;  // "label.field" -> value, custom case

  /// Applies one key; throws on an unknown key or malformed value.
  void set(const std::string& key, const std::string& v) {
    auto dbl = [&] { return parse_double(key, v); };
    auto in = [&](const std::set<std::string>& allowed) {
      require(allowed.count(v) > 0, "'" + key + "': invalid value '" + v + "'");
      return v;
    };
    if (key == "case") case_name = in({"cavity", "convergence", "pore", "custom"});
    else if (key == "ra") ra = dbl();
    else if (key == "re") re = dbl();
    else if (key == "ri") ri = dbl();
    else if (key == "pr") pr = dbl();
    else if (key == "dt") dt = dbl();
    else if (key == "tf") tf = dbl();
    else if (key == "n") n = parse_int(key, v);
    else if (key == "levels") levels = parse_int(key, v);
    else if (key == "method") method = in({"st", "pr", "both"});
    else if (key == "out") out = v;
    else if (key == "manufactured") manufactured = in({"homogeneous", "nonhomogeneous"});
    else if (key == "distortion") distortion = dbl();
    else if (key == "alpha") alpha = dbl();
    else if (key == "zeta") zeta = dbl();
    else if (key == "stabilization") stabilization = dbl();
    else if (key == "nusselt") nusselt = in({"gradient", "consistent"});
    else if (key == "vtk_every") vtk_every = parse_int(key, v);
    else if (key == "picard.tol") picard_tol = dbl();
    else if (key == "picard.max_iters") picard_max_iters = parse_int(key, v);
    else if (key == "picard.mode") picard_mode = in({"plain", "anderson"});
    else if (key == "picard.depth") picard_depth = parse_int(key, v);
    else if (key == "picard.relaxation") picard_relaxation = dbl();
    else if (key == "picard.absolute") picard_absolute = parse_bool(key, v);
    else if (key == "holes") holes = parse_holes(key, v);
    else if (key == "mesh") mesh_file = v;
    else if (key == "heat") solve_heat = parse_bool(key, v);
    else if (key == "force") force = parse_vec2(key, v);
    else if (key == "heat_source") heat_source = dbl();
    else if (key.rfind("bc.", 0) == 0) {
      const std::string rest = key.substr(3);
      const auto dot = rest.rfind('.');
      require(dot != std::string::npos && dot > 0, "'" + key + "': expected bc.<label>.<field>");
      const std::string field = rest.substr(dot + 1);
      require(std::set<std::string>{"fluid", "heat", "velocity", "traction", "temperature", "heat_flux"}.count(field),
              "'" + key + "': unknown boundary field '" + field + "'");
      bc[rest] = v;
    } else {
      throw Error("unknown configuration key '" + key + "'");
    }
  }

  void set_all(const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv) set(k, v);
  }

  /// Copy with every case-dependent default filled in.
  RunConfig resolved() const {
    RunConfig r = *this;
    const std::string c = case_name;
    auto fill = [](auto& opt, auto value) {
      if (!opt) opt = value;
    };
    if (c == "cavity") {
      fill(r.re, 1.408);
      fill(r.pr, 0.71);
      if (r.ri && !ra) r.ra = *r.ri * *r.re * *r.re * *r.pr;
      fill(r.ra, 1e3);
      r.ri = *r.ra / (*r.re * *r.re * *r.pr);
      fill(r.n, 64);
      fill(r.dt, 0.01);
      fill(r.tf, 1.0);
      fill(r.stabilization, 0.0);
    } else if (c == "convergence") {
      fill(r.re, 1.0);
      fill(r.ri, 0.0);
      fill(r.pr, 1.0);
      fill(r.n, 8);
      fill(r.dt, 0.1);
      fill(r.tf, 1.0);
      fill(r.stabilization, 0.0);
    } else if (c == "pore") {
      fill(r.re, 10.0);
      fill(r.ri, 0.0);
      fill(r.pr, 0.71);
      fill(r.n, 64);
      fill(r.dt, 0.05);
      fill(r.tf, 2.0);
      fill(r.stabilization, 0.1);
    } else {
      fill(r.re, 1.0);
      fill(r.ri, 0.0);
      fill(r.pr, 1.0);
      fill(r.n, 16);
      fill(r.dt, 0.01);
      fill(r.tf, 0.1);
      fill(r.stabilization, 0.0);
    }
    if (c != "cavity" && !r.ra) r.ra = *r.ri * *r.re * *r.re * *r.pr;
    if (r.method.empty()) r.method = c == "convergence" ? "both" : "pr";
    if (r.picard_mode.empty()) r.picard_mode = c == "pore" ? "anderson" : "plain";
    r.validate();
    return r;
  }

  void validate() const {
    require(levels >= 1, "levels must be at least 1");
    require(!n || *n >= 1, "n must be positive");
    require(vtk_every >= 0, "vtk_every must be non-negative");
    require(method != "both" || case_name == "convergence", "method 'both' is only available for convergence");
    picard().validate();
  }

  PicardConfig picard() const {
    PicardConfig p;
    p.tol = picard_tol;
    p.max_iters = picard_max_iters;
    p.mode = picard_mode == "anderson" ? PicardMode::Anderson : PicardMode::Plain;
    p.depth = picard_depth;
    p.relaxation = picard_relaxation;
    p.absolute = picard_absolute;
    return p;
  }

  /// Resolved configuration as `key = value` lines, readable by set_all().
  std::string to_text() const {
    std::ostringstream s;
    s << std::setprecision(12);
    auto opt = [&](const char* k, const auto& o) {
      if (o) s << k << " = " << *o << '\n';
    };
    s << "case = " << case_name << '\n';
    opt("ra", ra);
    opt("re", re);
    opt("ri", ri);
    opt("pr", pr);
    opt("n", n);
    s << "levels = " << levels << '\n';
    if (!method.empty()) s << "method = " << method << '\n';
    opt("dt", dt);
    opt("tf", tf);
    s << "out = " << out << '\n';
    s << "manufactured = " << manufactured << '\n';
    s << "distortion = " << distortion << '\n';
    s << "alpha = " << alpha << '\n';
    s << "zeta = " << zeta << '\n';
    opt("stabilization", stabilization);
    s << "nusselt = " << nusselt << '\n';
    s << "vtk_every = " << vtk_every << '\n';
    s << "picard.tol = " << picard_tol << '\n';
    s << "picard.max_iters = " << picard_max_iters << '\n';
    if (!picard_mode.empty()) s << "picard.mode = " << picard_mode << '\n';
    s << "picard.depth = " << picard_depth << '\n';
    s << "picard.relaxation = " << picard_relaxation << '\n';
    s << "picard.absolute = " << (picard_absolute ? "true" : "false") << '\n';
    s << "holes = " << format_holes(holes) << '\n';
    if (!mesh_file.empty()) s << "mesh = " << mesh_file << '\n';
    s << "heat = " << (solve_heat ? "true" : "false") << '\n';
    s << "force = " << force.x() << ' ' << force.y() << '\n';
    s << "heat_source = " << heat_source << '\n';
    for (const auto& [k, v] : bc) s << "bc." << k << " = " << v << '\n';
    return s.str();
  }
};

namespace detail {

inline Method to_method(const std::string& m) { return m == "st" ? Method::ST : Method::PR; }

inline std::string vtk_name(const std::string& dir, const std::string& prefix, int step) {
  std::ostringstream s;
  s << dir << '/' << prefix << std::setw(4) << std::setfill('0') << step << ".vtk";
  return s.str();
}

/// Custom problem: constant boundary data per label from bc.<label>.<field>.
inline CaseSetup custom_setup(const RunConfig& r) {
  Mesh mesh = r.mesh_file.empty() ? build_uniform_quad_mesh(*r.n, *r.n) : read_mesh_file(r.mesh_file);
  CaseSetup s;
  Problem& pb = s.problem;
  pb.boundary["*"] = BoundaryData{constant_vector(Vec2::Zero()), constant_vector(Vec2::Zero()),
                                  constant_scalar(0.0), constant_scalar(0.0)};
  std::map<std::string, std::pair<FluidBc, HeatBc>> conditions;
  for (const auto& t : mesh.tags()) conditions[t.label] = {t.fluid, t.heat};
  for (const auto& [key, v] : r.bc) {
    const auto dot = key.rfind('.');
    const std::string label = key.substr(0, dot), field = key.substr(dot + 1);
    require(conditions.count(label) > 0, "bc: mesh has no boundary label '" + label + "'");
    const std::string k = "bc." + key;
    if (field == "fluid") {
      require(v == "dirichlet" || v == "neumann", "'" + k + "': expected dirichlet or neumann");
      conditions[label].first = v == "dirichlet" ? FluidBc::Dirichlet : FluidBc::Neumann;
    } else if (field == "heat") {
      require(v == "dirichlet" || v == "neumann", "'" + k + "': expected dirichlet or neumann");
      conditions[label].second = v == "dirichlet" ? HeatBc::Dirichlet : HeatBc::Neumann;
    } else if (field == "velocity") {
      pb.boundary[label].velocity = constant_vector(parse_vec2(k, v));
    } else if (field == "traction") {
      pb.boundary[label].traction = constant_vector(parse_vec2(k, v));
    } else if (field == "temperature") {
      pb.boundary[label].temperature = constant_scalar(parse_double(k, v));
    } else {
      pb.boundary[label].heat_flux = constant_scalar(parse_double(k, v));
    }
  }
  for (const auto& [label, fh] : conditions) mesh = mesh.with_conditions(label, fh.first, fh.second);
  s.mesh = std::make_shared<const Mesh>(std::move(mesh));
  pb.body_force = constant_vector(r.force);
  pb.heat_source = constant_scalar(r.heat_source);
  pb.solve_heat = r.solve_heat;
  AssemblyConfig& a = s.assembly;
  a.Re = *r.re;
  a.Ri = *r.ri;
  a.Pr = *r.pr;
  a.dt = *r.dt;
  a.alpha = r.alpha;
  a.zeta = r.zeta;
  a.stabilization_c = *r.stabilization;
  a.use_reconstruction = to_method(r.method) == Method::PR;
  s.picard = r.picard();
  return s;
}

/// Runs a setup step by step, writing iterations.csv and VTK snapshots.
inline State drive(const CaseSetup& setup, const RunConfig& r, const std::string& prefix, CsvWriter& iters,
                   const std::function<void(int, const State&, const State&)>& per_step = {}) {
  auto sim = setup.simulation();
  const int steps = step_count(*r.dt, *r.tf);
  const bool rec = setup.assembly.use_reconstruction;
  State s = sim->initial_state();
  for (int k = 1; k <= steps; ++k) {
    const State prev = s;
    const StepResult res = sim->step(prev);
    for (std::size_t i = 0; i < res.residuals.size(); ++i) iters.row(prefix, k, i + 1, res.residuals[i]);
    if (!res.converged) {
      write_vtk_file(vtk_name(r.out, "fields_" + prefix + "_failed_", k), *setup.mesh, res.state, rec);
      throw PicardFailure("Picard iteration did not converge at step " + std::to_string(k), res.residuals);
    }
    s = res.state;
    if (per_step) per_step(k, prev, s);
    if ((r.vtk_every > 0 && k % r.vtk_every == 0) || k == steps)
      write_vtk_file(vtk_name(r.out, "fields_" + prefix + (prefix.empty() ? "" : "_"), k), *setup.mesh, s, rec);
  }
  return s;
}

}  // namespace detail

/// Runs the configured case and writes its artifacts into r.out. Returns the
/// process exit status: 0 on success, 1 when a solve fails (the partial
/// artifacts stay on disk). Configuration errors throw.
inline int run(const RunConfig& config, std::ostream& log) {
  const RunConfig r = config.resolved();
  const std::string dir = prepare_output_dir(r.out);
  std::ofstream summary(dir + "/summary.txt");
  require(static_cast<bool>(summary), "cannot write summary in '" + dir + "'");
  summary << std::setprecision(12) << r.to_text();
  CsvWriter iters(dir + "/iterations.csv", {"run", "step", "iteration", "residual"});
  try {
    if (r.case_name == "cavity") {
      CavityConfig c;
      c.Ra = *r.ra;
      c.Re = *r.re;
      c.Pr = *r.pr;
      c.n = *r.n;
      c.dt = *r.dt;
      c.tf = *r.tf;
      c.method = detail::to_method(r.method);
      c.alpha = r.alpha;
      c.zeta = r.zeta;
      c.nusselt = r.nusselt == "gradient" ? NusseltMethod::Gradient : NusseltMethod::ConsistentFlux;
      c.picard = r.picard();
      const CaseSetup setup = cavity_setup(c);
      State prev;
      const State s = detail::drive(setup, r, method_name(c.method), iters,
                                    [&](int, const State& p, const State&) { prev = p; });
      auto sim = setup.simulation();
      CavityQuantities q = cavity_quantities(*setup.mesh, s);
      if (c.nusselt == NusseltMethod::ConsistentFlux)
        q.Nu0 = nusselt_consistent(sim->discretization(), setup.problem, setup.assembly, s.velocity,
                                   prev.temperature, s.temperature, s.time);
      const double div = c.method == Method::PR ? max_reconstructed_divergence(*setup.mesh, s.velocity) : 0.0;
      CsvWriter qs(dir + "/quantities.csv",
                   {"Ra", "n", "method", "U_max", "y_max", "V_max", "x_max", "Nu0", "max_div_Ru"});
      qs.row(c.Ra, c.n, method_name(c.method), q.U_max, q.y_max, q.V_max, q.x_max, q.Nu0, div);
      log << std::setprecision(6) << "Ra = " << c.Ra << ": U_max = " << q.U_max << " at y = " << q.y_max
          << ", V_max = " << q.V_max << " at x = " << q.x_max << ", Nu0 = " << q.Nu0 << '\n';
      summary << "result.U_max = " << q.U_max << "\nresult.y_max = " << q.y_max << "\nresult.V_max = " << q.V_max
              << "\nresult.x_max = " << q.x_max << "\nresult.Nu0 = " << q.Nu0 << "\nresult.max_div_Ru = " << div
              << '\n';
    } else if (r.case_name == "convergence") {
      CsvWriter errors(dir + "/errors.csv",
                       {"method", "level", "n", "h", "velocity_error", "pressure_error", "max_div_Ru", "converged"});
      CsvWriter rates(dir + "/rates.csv", {"method", "level", "velocity_rate", "pressure_rate"});
      std::string first_failure;
      const std::vector<std::string> methods =
          r.method == "both" ? std::vector<std::string>{"st", "pr"} : std::vector<std::string>{r.method};
      for (const std::string& m : methods) {
        ConvergenceConfig c;
        c.manufactured = r.manufactured;
        c.Re = *r.re;
        c.method = detail::to_method(m);
        c.base_n = *r.n;
        c.levels = r.levels;
        c.distortion = r.distortion;
        c.dt = *r.dt;
        c.tf = *r.tf;
        c.alpha = r.alpha;
        c.zeta = r.zeta;
        c.picard = r.picard();
        const ManufacturedCase mc = manufactured_case(c.manufactured);
        double prev_u = 0.0, prev_p = 0.0;
        for (int l = 0; l < c.levels; ++l) {
          const int n = c.base_n << l;
          const CaseSetup setup = manufactured_setup(c, n);
          const std::string tag = std::string(method_name(c.method)) + "_n" + std::to_string(n);
          State s;
          try {
            s = detail::drive(setup, r, tag, iters);
          } catch (const PicardFailure& e) {
            // later levels still run; the study as a whole reports failure
            const double nan = std::numeric_limits<double>::quiet_NaN();
            errors.row(method_name(c.method), l, n, 1.0 / n, nan, nan, nan, 0);
            if (l > 0) rates.row(method_name(c.method), l, nan, nan);
            log << method_name(c.method) << " n = " << n << ": " << e.what() << '\n';
            summary << "result." << method_name(c.method) << ".n" << n << ".status = failed\n";
            if (first_failure.empty()) first_failure = tag + ": " + e.what();
            prev_u = prev_p = nan;
            continue;
          }
          const double eu = velocity_l2_error(*setup.mesh, s.velocity, mc.velocity, s.time);
          const double ep = pressure_l2_error(*setup.mesh, s.pressure, mc.pressure, s.time);
          const double div = c.method == Method::PR ? max_reconstructed_divergence(*setup.mesh, s.velocity) : 0.0;
          errors.row(method_name(c.method), l, n, 1.0 / n, eu, ep, div, 1);
          if (l > 0) rates.row(method_name(c.method), l, std::log2(prev_u / eu), std::log2(prev_p / ep));
          log << std::setprecision(6) << method_name(c.method) << " n = " << n << ": |u - u_h| = " << eu
              << ", |p - p_h| = " << ep << '\n';
          summary << "result." << method_name(c.method) << ".n" << n << ".velocity_error = " << eu << '\n'
                  << "result." << method_name(c.method) << ".n" << n << ".pressure_error = " << ep << '\n';
          prev_u = eu;
          prev_p = ep;
        }
      }
      if (!first_failure.empty()) throw PicardFailure(first_failure, {});
    } else if (r.case_name == "pore") {
      PoreConfig c;
      c.Re = *r.re;
      c.Ri = *r.ri;
      c.Pr = *r.pr;
      c.n = *r.n;
      c.holes = r.holes;
      c.dt = *r.dt;
      c.tf = *r.tf;
      c.stabilization_c = *r.stabilization;
      c.method = detail::to_method(r.method);
      c.alpha = r.alpha;
      c.zeta = r.zeta;
      c.picard = r.picard();
      const CaseSetup setup = pore_setup(c);
      CsvWriter flux(dir + "/flux.csv", {"time", "F_theta", "F_theta_reconstructed"});
      double last = 0.0;
      detail::drive(setup, r, method_name(c.method), iters, [&](int, const State&, const State& s) {
        last = convective_heat_flux(*setup.mesh, s);
        flux.row(s.time, last, convective_heat_flux_reconstructed(*setup.mesh, s));
      });
      log << std::setprecision(6) << "Re = " << c.Re << ", Ri = " << c.Ri << ": F_theta(t_f) = " << last << '\n';
      summary << "result.F_theta = " << last << '\n';
    } else {
      const CaseSetup setup = detail::custom_setup(r);
      const State s = detail::drive(setup, r, r.method, iters);
      const Discretization d(*setup.mesh);
      const auto norms = StateNorm(d).components(s);
      const double div = setup.assembly.use_reconstruction ? max_reconstructed_divergence(*setup.mesh, s.velocity) : 0.0;
      CsvWriter qs(dir + "/quantities.csv", {"time", "velocity_l2", "pressure_l2", "temperature_l2", "max_div_Ru"});
      qs.row(s.time, norms[0], norms[1], norms[2], div);
      log << std::setprecision(6) << "t = " << s.time << ": |u_h| = " << norms[0] << ", |p_h| = " << norms[1]
          << ", |theta_h| = " << norms[2] << '\n';
      summary << "result.velocity_l2 = " << norms[0] << "\nresult.pressure_l2 = " << norms[1]
              << "\nresult.temperature_l2 = " << norms[2] << "\nresult.max_div_Ru = " << div << '\n';
    }
  } catch (const PicardFailure& e) {
    summary << "status = failed\nmessage = " << e.what() << '\n';
    log << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    summary << "status = failed\nmessage = " << e.what() << '\n';
    throw;
  }
  summary << "status = ok\n";
  return 0;
}

}  // namespace egflow
