#pragma once

#include "egflow/common.hpp"

#include <deque>

namespace egflow {

/// Windowed Anderson acceleration of a fixed-point map g.
///
/// Each call receives the previous iterate x_{k-1} and g(x_{k-1}) and returns
///   x_k = x_{k-1} + beta w_k - (E_k + beta F_k) gamma_k,
///   gamma_k = argmin || F_k gamma - w_k ||,  w_k = g(x_{k-1}) - x_{k-1},
/// with E_k holding iterate differences and F_k residual differences of the
/// last min(k-1, m) steps.
class AndersonAccelerator {
 public:
  explicit AndersonAccelerator(int depth, double relaxation = 1.0) : m_(depth), beta_(relaxation) {
    require(depth >= 0, "anderson: depth must be non-negative");
    require(relaxation > 0.0, "anderson: relaxation must be positive");
  }

  int depth() const { return m_; }
  int iteration() const { return k_; }
  /// Number of stored (e_j, dw_j) column pairs.
  int columns() const { return static_cast<int>(df_.size()); }
  /// Columns dropped for rank deficiency so far.
  int dropped() const { return dropped_; }

  void reset() {
    k_ = 0;
    df_.clear();
    dx_.clear();
    has_prev_ = false;
    dropped_ = 0;
  }

  Vector update(const Vector& x_prev, const Vector& g_prev) {
    require(x_prev.size() == g_prev.size(), "anderson: size mismatch");
    ++k_;
    Vector w = g_prev - x_prev;
    if (has_prev_ && m_ > 0) {
      df_.push_front(w - w_prev_);
      dx_.push_front(x_prev - x_prev_);
      while (static_cast<int>(df_.size()) > m_) {
        df_.pop_back();
        dx_.pop_back();
      }
    }
    x_prev_ = x_prev;
    w_prev_ = w;
    has_prev_ = true;

    Vector gamma;
    if (!df_.empty()) gamma = least_squares(w);
    if (df_.empty()) return (beta_ == 1.0) ? g_prev : Vector(x_prev + beta_ * w);
    Vector x = x_prev + beta_ * w;
    for (int j = 0; j < gamma.size(); ++j) x -= gamma[j] * (dx_[j] + beta_ * df_[j]);
    return x;
  }

 private:
  /// Householder QR of F (newest column first). Columns from the first
  /// numerically dependent one onwards are discarded for good.
  Vector least_squares(const Vector& w) {
    for (;;) {
      const int n = static_cast<int>(df_.size());
      Eigen::MatrixXd f(w.size(), n);
      for (int j = 0; j < n; ++j) f.col(j) = df_[j];
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(f);
      const Eigen::MatrixXd r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
      const double threshold = 1e-12 * f.norm();
      int rank = n;
      for (int j = 0; j < n; ++j)
        if (!(std::abs(r(j, j)) > threshold)) {
          rank = j;
          break;
        }
      if (rank == n) {
        const Vector qtw = (qr.householderQ().transpose() * w).head(n);
        return r.triangularView<Eigen::Upper>().solve(qtw);
      }
      dropped_ += n - rank;
      df_.resize(rank);
      dx_.resize(rank);
      if (rank == 0) return Vector();
    }
  }

  int m_;
  double beta_;
  int k_ = 0;
  int dropped_ = 0;
  bool has_prev_ = false;
  Vector x_prev_, w_prev_;
  std::deque<Vector> df_, dx_;
};

}  // namespace egflow
