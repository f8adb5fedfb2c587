#include "dck/linalg.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

namespace dck {

struct SpdSolver::Impl {
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt;
};

SpdSolver spd_factorize(const SparseMatrix& mat) {
  if (mat.rows() != mat.cols()) throw std::invalid_argument("spd_factorize: matrix not square");
  auto impl = std::make_shared<SpdSolver::Impl>();
  SpdSolver solver;
  solver.size_ = static_cast<Index>(mat.rows());
  if (mat.rows() > 0) {
    impl->llt.compute(mat);
    if (impl->llt.info() != Eigen::Success) throw NotSpdError("matrix is not SPD");
  }
  solver.impl_ = std::move(impl);
  return solver;
}

Vector SpdSolver::solve(const Vector& rhs) const {
  if (!impl_) throw std::logic_error("SpdSolver used before factorization");
  if (rhs.size() != size_) throw std::invalid_argument("SpdSolver: rhs length mismatch");
  if (size_ == 0) return Vector();
  return impl_->llt.solve(rhs);
}

Eigen::MatrixXd SpdSolver::solve_columns(const Eigen::MatrixXd& rhs) const {
  Eigen::MatrixXd out(rhs.rows(), rhs.cols());
  for (Eigen::Index j = 0; j < rhs.cols(); ++j) out.col(j) = solve(Vector(rhs.col(j)));
  return out;
}

LinearOperator as_operator(const SparseMatrix& mat) {
  return {static_cast<Index>(mat.rows()), [&mat](const Vector& v) -> Vector { return mat * v; }};
}

PcgResult pcg(const LinearOperator& op, const Vector& rhs, const SpdSolver* precond,
              const Vector& x0, const PcgOptions& options) {
  if (rhs.size() != op.size || x0.size() != op.size)
    throw std::invalid_argument("pcg: size mismatch");
  PcgResult res;
  res.x = x0;
  const double bnorm = rhs.norm();
  if (bnorm == 0.0) {
    res.x.setZero();
    res.converged = true;
    return res;
  }
  auto precondition = [&](const Vector& r) { return precond ? precond->solve(r) : r; };

  Vector r = rhs - op.apply(res.x);
  double rnorm = r.norm();
  if (rnorm <= options.rel_tol * bnorm) {
    res.converged = true;
    res.relative_residual = rnorm / bnorm;
    return res;
  }
  Vector z = precondition(r);
  Vector p = z;
  double rz = r.dot(z);
  for (int k = 1; k <= options.max_iter; ++k) {
    const Vector q = op.apply(p);
    const double pq = p.dot(q);
    if (!(pq > 0.0)) throw NotSpdError("operator not SPD (pcg breakdown)");
    const double alpha = rz / pq;
    res.x += alpha * p;
    r -= alpha * q;
    rnorm = r.norm();
    res.iterations = k;
    if (rnorm <= options.rel_tol * bnorm) {
      // Confirm against the true residual to guard against drift.
      const double true_norm = (rhs - op.apply(res.x)).norm();
      if (true_norm <= options.rel_tol * bnorm) {
        res.converged = true;
        res.relative_residual = true_norm / bnorm;
        return res;
      }
      r = rhs - op.apply(res.x);
      rnorm = true_norm;
    }
    z = precondition(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  res.relative_residual = rnorm / bnorm;
  return res;
}

Vector solve_sparse_lu(const SparseMatrix& mat, const Vector& rhs) {
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  SparseMatrix a = mat;
  a.makeCompressed();
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw SingularSystemError("singular system: " + lu.lastErrorMessage());
  Vector x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite()) throw SingularSystemError("singular system");
  return x;
}

SparseMatrix submatrix(const SparseMatrix& mat, const std::vector<Index>& rows,
                       const std::vector<Index>& cols) {
  std::vector<Index> row_pos(mat.rows(), -1);
  for (std::size_t i = 0; i < rows.size(); ++i) row_pos[rows[i]] = static_cast<Index>(i);
  std::vector<Triplet> t;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    for (SparseMatrix::InnerIterator it(mat, cols[j]); it; ++it) {
      const Index i = row_pos[it.row()];
      if (i >= 0) t.emplace_back(i, static_cast<Index>(j), it.value());
    }
  }
  SparseMatrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

Vector gather(const Vector& x, const std::vector<Index>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = x[idx[i]];
  return out;
}

}  // namespace dck
