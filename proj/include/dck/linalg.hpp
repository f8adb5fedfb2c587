#pragma once

#include <functional>
#include <memory>

#include "dck/types.hpp"

namespace dck {

/// Reusable sparse Cholesky factorization with a fill-reducing ordering.
///
/// Copies share the factorization, and `solve` is const and thread-safe.
class SpdSolver {
 public:
  SpdSolver() = default;

  Index size() const { return size_; }
  bool empty() const { return !impl_; }

  Vector solve(const Vector& rhs) const;
  /// Solves column by column.
  Eigen::MatrixXd solve_columns(const Eigen::MatrixXd& rhs) const;

 private:
  friend SpdSolver spd_factorize(const SparseMatrix& mat);
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  Index size_ = 0;
};

/// Factorizes a symmetric positive definite matrix (AMD ordering + LLT).
/// Throws NotSpdError on a non-positive pivot.
SpdSolver spd_factorize(const SparseMatrix& mat);

/// Matrix-free symmetric operator.
struct LinearOperator {
  Index size = 0;
  std::function<Vector(const Vector&)> apply;
};

LinearOperator as_operator(const SparseMatrix& mat);

struct PcgOptions {
  double rel_tol = 1e-10;
  int max_iter = 1000;
};

struct PcgResult {
  Vector x;
  int iterations = 0;
  bool converged = false;
  double relative_residual = 0.0;
};

/// Preconditioned conjugate gradients. Convergence is tested on the
/// unpreconditioned residual: |rhs - op(x)| <= rel_tol |rhs|. A null
/// preconditioner means the identity. Throws NotSpdError when p'Ap <= 0.
PcgResult pcg(const LinearOperator& op, const Vector& rhs, const SpdSolver* precond,
              const Vector& x0, const PcgOptions& options = {});

/// Direct solve of a square, possibly indefinite sparse system by sparse LU.
/// Throws SingularSystemError if the factorization fails.
Vector solve_sparse_lu(const SparseMatrix& mat, const Vector& rhs);

/// Principal submatrix mat(rows, cols) for sorted index lists.
SparseMatrix submatrix(const SparseMatrix& mat, const std::vector<Index>& rows,
                       const std::vector<Index>& cols);

/// x(idx)
Vector gather(const Vector& x, const std::vector<Index>& idx);

}  // namespace dck
