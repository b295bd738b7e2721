#pragma once

#include "egflow/common.hpp"

#include <Eigen/SparseLU>
#ifdef EGFLOW_HAVE_UMFPACK
#include <Eigen/UmfPackSupport>
#endif

#include <memory>
#include <sstream>
#include <vector>

namespace egflow {

struct LinearSolverConfig {
  double residual_threshold = 1e-10;
  int refinement_steps = 3;
};

/// Sparse direct solver with a residual check and iterative refinement. The
/// symbolic analysis is reused while the sparsity pattern stays the same.
class LinearSolver {
 public:
  explicit LinearSolver(LinearSolverConfig cfg = {}) : cfg_(cfg) {}

  Vector solve(const SparseMatrix& a_in, const Vector& b) {
    require(a_in.rows() == a_in.cols() && a_in.rows() == b.size(), "linear solve: dimension mismatch");
    SparseMatrix a = a_in;
    a.makeCompressed();
    factorize(a);
    Vector x = backend_solve(b);
    const double bnorm = b.norm();
    const double scale = bnorm > 0.0 ? bnorm : 1.0;
    Vector r = b - a * x;
    last_residual_ = r.norm() / scale;
    for (int k = 0; k < cfg_.refinement_steps && last_residual_ > cfg_.residual_threshold; ++k) {
      x += backend_solve(r);
      r = b - a * x;
      last_residual_ = r.norm() / scale;
    }
    if (!(last_residual_ <= cfg_.residual_threshold)) {
      std::ostringstream msg;
      msg << "linear solve: relative residual " << last_residual_ << " above threshold "
          << cfg_.residual_threshold;
      throw Error(msg.str());
    }
    return x;
  }

  double last_residual() const { return last_residual_; }

  static const char* backend_name() {
#ifdef EGFLOW_HAVE_UMFPACK
    return "umfpack";
#else
    return "eigen-sparselu";
#endif
  }

 private:
#ifdef EGFLOW_HAVE_UMFPACK
  using Backend = Eigen::UmfPackLU<SparseMatrix>;
#else
  using Backend = Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>;
#endif

  bool same_pattern(const SparseMatrix& a) const {
    if (!lu_ || a.rows() != rows_ || a.nonZeros() != static_cast<Eigen::Index>(inner_.size())) return false;
    return std::equal(outer_.begin(), outer_.end(), a.outerIndexPtr()) &&
           std::equal(inner_.begin(), inner_.end(), a.innerIndexPtr());
  }

  void factorize(const SparseMatrix& a) {
    if (!same_pattern(a)) {
      lu_ = std::make_unique<Backend>();
      lu_->analyzePattern(a);
      rows_ = a.rows();
      outer_.assign(a.outerIndexPtr(), a.outerIndexPtr() + a.outerSize() + 1);
      inner_.assign(a.innerIndexPtr(), a.innerIndexPtr() + a.nonZeros());
    }
    lu_->factorize(a);
    if (lu_->info() != Eigen::Success) {
      lu_.reset();
      throw Error("linear solve: factorization failed (singular or ill-posed system)");
    }
  }

  Vector backend_solve(const Vector& b) {
    Vector x = lu_->solve(b);
    if (lu_->info() != Eigen::Success || !x.allFinite()) throw Error("linear solve: back substitution failed");
    return x;
  }

  LinearSolverConfig cfg_;
  std::unique_ptr<Backend> lu_;
  Eigen::Index rows_ = 0;
  std::vector<int> outer_, inner_;
  double last_residual_ = 0.0;
};

/// One-shot convenience wrapper.
inline Vector solve_linear(const SparseMatrix& a, const Vector& b, LinearSolverConfig cfg = {}) {
  LinearSolver s(cfg);
  return s.solve(a, b);
}

}  // namespace egflow
