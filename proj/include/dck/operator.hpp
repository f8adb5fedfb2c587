#pragma once

#include <memory>
#include <optional>

#include "dck/assembly.hpp"
#include "dck/linalg.hpp"

namespace dck {

/// Discretized boundary control problem on one mesh: the finite element
/// matrices, factorizations of the interior stiffness and the boundary mass,
/// the projected target and the reduced right-hand side f.
///
/// Immutable after construction; the apply functions are const and may be
/// called concurrently.
class DiscreteProblem {
 public:
  DiscreteProblem(std::shared_ptr<const Mesh> mesh, const RegionPredicate& omega, double nu,
                  ScalarField target);
  /// Uses the given matrices as they are (lets tests inject faulty ones).
  DiscreteProblem(std::shared_ptr<const Mesh> mesh, IndexSets sets, FemMatrices fem, double nu,
                  ScalarField target);

  const Mesh& mesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
  const IndexSets& sets() const { return sets_; }
  const FemMatrices& fem() const { return fem_; }
  double nu() const { return nu_; }
  const ScalarField& target() const { return target_; }
  /// L2 projection of the target onto the P1 space.
  const FieldVector& target_nodal() const { return target_nodal_; }
  const BoundaryVector& f() const { return f_; }
  double c_const() const { return c_const_; }

  Index num_boundary() const { return sets_.num_boundary(); }
  Index num_interior() const { return sets_.num_interior(); }

  const SparseMatrix& boundary_mass_bb() const { return b_bb_; }
  const SparseMatrix& mass_bb() const { return m_bb_; }
  /// M_BB + nu B_BB, the reduced-space preconditioner.
  const SparseMatrix& preconditioner_matrix() const { return p_bb_; }
  const SpdSolver& preconditioner() const { return p_factor_; }
  const SpdSolver& interior_stiffness_factor() const { return k_ii_factor_; }

  /// Discrete harmonic extension: y_B = u, K_II y_I = -K_IB u.
  FieldVector apply_S(const BoundaryVector& u) const;
  /// S' v = v_B - K_BI K_II^{-1} v_I for a nodal load v.
  BoundaryVector apply_St(const FieldVector& load) const;
  /// Interior adjoint: K_II phi = (M y + extra)_I.
  Vector adjoint_state(const FieldVector& y, const FieldVector* extra = nullptr) const;
  /// Variational normal derivative w with B_BB w = (M y + extra)_B - K_BI phi.
  BoundaryVector normal_derivative(const FieldVector& y, const FieldVector* extra = nullptr) const;

  /// (S'MS + nu B_BB) u, matrix free.
  BoundaryVector apply_A(const BoundaryVector& u) const;
  LinearOperator reduced_operator() const;

  /// 1/2 |S u - target|^2 in L2 by quadrature plus nu/2 u'B u.
  double evaluate_J(const BoundaryVector& u) const;
  /// 1/2 u'Au - f'u + c_const.
  double quadratic_J(const BoundaryVector& u) const;
  /// 1/2 (Su - y_h)'M(Su - y_h) + nu/2 u'Bu with the projected target y_h.
  double projected_J(const BoundaryVector& u) const;

  /// Scatter a boundary vector into a nodal vector (zero in the interior).
  FieldVector boundary_to_field(const BoundaryVector& u) const;

 private:
  void setup();

  std::shared_ptr<const Mesh> mesh_;
  IndexSets sets_;
  FemMatrices fem_;
  double nu_;
  ScalarField target_;
  FieldVector target_nodal_;
  SparseMatrix k_ii_, k_ib_, k_bi_, m_bb_, b_bb_, p_bb_;
  SpdSolver k_ii_factor_, b_bb_factor_, p_factor_;
  BoundaryVector f_;
  double c_const_ = 0.0;
};

/// The reduced Hessian of the penalized problem, A + gamma S'HS, where H is
/// diagonal with the lumped omega masses on the active nodes.
struct PenalizedOperator {
  const DiscreteProblem* base = nullptr;
  double gamma = 0.0;
  FieldVector h;  // diagonal of H, zero on boundary nodes

  /// One adjoint solve with the merged load (M + gamma H) y.
  BoundaryVector apply(const BoundaryVector& u) const;
  LinearOperator as_operator() const;
  /// c = f + S'H(gamma b - mu) for an upper bound b with shift mu.
  BoundaryVector rhs(const FieldVector& shift, const FieldVector& bound) const;
  /// f + S' load for a precomputed affine penalty load.
  BoundaryVector rhs_with_load(const FieldVector& load) const;
};

/// Diagonal of H for the given active nodes.
FieldVector penalty_diagonal(const DiscreteProblem& prob, const std::vector<Index>& active);

/// Constrained boundary nodes with their prescribed values, positions into the
/// boundary index list.
struct FixedControls {
  std::vector<Index> positions;  // sorted
  Vector values;
};

/// Penalty linearization for the assembled systems: H and the affine load.
struct PenaltyLinearization {
  double gamma = 0.0;
  FieldVector h;     // diagonal of H
  FieldVector load;  // e.g. H(gamma b - mu)
};

/// Assembled optimality system in the unknowns (y, phi_I, lambda_fixed):
///
///   [ M + nu B + gamma H   -K_{:,I}   I_{:,A} ] [ y      ]   [ M y_target + load ]
///   [ -K_{I,:}             0          0       ] [ phi_I  ] = [ 0                 ]
///   [ I_{A,:}              0          0       ] [ lambda ]   [ bounds_A          ]
struct KktSystem {
  SparseMatrix matrix;
  Vector rhs;
  Index num_state = 0;
  Index num_adjoint = 0;
  Index num_fixed = 0;
  std::vector<Index> fixed_nodes;  // node of each constraint row
};

struct KktSolution {
  FieldVector y;
  Vector phi_interior;
  Vector lambda_fixed;
  BoundaryVector u;
};

KktSystem assemble_kkt(const DiscreteProblem& prob, const FixedControls* fixed = nullptr,
                       const PenaltyLinearization* penalty = nullptr);
KktSolution solve_kkt(const DiscreteProblem& prob, const KktSystem& system);

}  // namespace dck
