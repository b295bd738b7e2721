#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <stdexcept>
#include <string>

namespace egflow {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Scalar field f(x, t).
using ScalarFn = std::function<double(const Vec2&, double)>;
/// Vector field f(x, t).
using VectorFn = std::function<Vec2(const Vec2&, double)>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Signed area of triangle (a, b, c); positive when counterclockwise.
inline double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * cross(b - a, c - a);
}

}  // namespace egflow
