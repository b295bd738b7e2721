#pragma once

#include "egflow/common.hpp"
#include "egflow/mesh.hpp"

#include <map>
#include <string>

namespace egflow {

/// Boundary data attached to a boundary label. Only the entries matching the
/// label's fluid and heat conditions are used.
struct BoundaryData {
  VectorFn velocity;     // u_D
  VectorFn traction;     // t_N
  ScalarFn temperature;  // theta_D
  ScalarFn heat_flux;    // q_N
};

inline VectorFn constant_vector(Vec2 v) {
  return [v](const Vec2&, double) { return v; };
}

inline ScalarFn constant_scalar(double s) {
  return [s](const Vec2&, double) { return s; };
}

/// Data of one Boussinesq problem: sources, boundary data per label (the label
/// "*" supplies any datum a label leaves unset) and initial data.
struct Problem {
  std::map<std::string, BoundaryData> boundary;
  VectorFn body_force = constant_vector(Vec2::Zero());
  ScalarFn heat_source = constant_scalar(0.0);
  VectorFn initial_velocity = constant_vector(Vec2::Zero());
  ScalarFn initial_temperature = constant_scalar(0.0);
  bool solve_heat = true;

  const BoundaryData& data(const std::string& label) const {
    auto it = boundary.find(label);
    if (it == boundary.end()) it = boundary.find("*");
    if (it == boundary.end()) throw Error("missing boundary data for label '" + label + "'");
    return it->second;
  }

  const VectorFn& velocity(const std::string& label) const {
    return lookup(&BoundaryData::velocity, label, "velocity");
  }
  const VectorFn& traction(const std::string& label) const {
    return lookup(&BoundaryData::traction, label, "traction");
  }
  const ScalarFn& temperature(const std::string& label) const {
    return lookup(&BoundaryData::temperature, label, "temperature");
  }
  const ScalarFn& heat_flux(const std::string& label) const {
    return lookup(&BoundaryData::heat_flux, label, "heat flux");
  }

  /// Throws when a boundary edge lacks a datum required by its tag.
  void validate(const Mesh& mesh) const {
    for (const auto& tag : mesh.tags()) {
      if (tag.fluid == FluidBc::Dirichlet) velocity(tag.label);
      else traction(tag.label);
      if (!solve_heat) continue;
      if (tag.heat == HeatBc::Dirichlet) temperature(tag.label);
      else heat_flux(tag.label);
    }
  }

 private:
  // The label's own entry wins; unset entries fall back to "*".
  template <class F>
  const F& lookup(F BoundaryData::*member, const std::string& label, const char* what) const {
    for (const std::string& key : {label, std::string("*")}) {
      auto it = boundary.find(key);
      if (it != boundary.end() && it->second.*member) return it->second.*member;
    }
    throw Error(std::string("missing boundary ") + what + " for label '" + label + "'");
  }
};

}  // namespace egflow
