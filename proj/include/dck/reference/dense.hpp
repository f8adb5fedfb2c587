#pragma once

#include <vector>

#include <Eigen/Dense>

#include "dck/mesh.hpp"
#include "dck/quadrature.hpp"

// Brute-force dense counterparts of the discretization and the solvers, used as
// independent oracles by the tests and the verify command. Only the mesh data
// structure is shared with the production path.
namespace dck::reference {

using Matrix = Eigen::MatrixXd;

struct DenseModel {
  int dim = 2;
  Index num_nodes = 0;
  std::vector<Index> interior;
  std::vector<Index> boundary;
  std::vector<Index> omega;
  Matrix K, M, B;         // full N x N
  Vector lumped;          // row sums of M on omega, zero elsewhere
  Vector target_load;     // (target, e_j)
  Vector target_nodal;    // M^{-1} target_load
  Matrix S;               // N x N_B harmonic extension
  Matrix A;               // S'MS + nu B_BB
  Matrix B_bb;
  Vector f;               // S'M target_nodal
  double c = 0.0;         // 1/2 target_nodal' M target_nodal
  double nu = 0.0;
};

/// Nodes on a facet that belongs to exactly one cell, found by counting every
/// cell facet.
std::vector<Index> boundary_by_facet_count(const Mesh& mesh);

/// Dense assembly with its own quadrature rules. Fields with a cut must not
/// straddle any cell.
DenseModel build_dense_model(const Mesh& mesh, const RegionPredicate& omega, double nu,
                             const ScalarField& target);

/// 1/2 |S u - target|^2 by a degree-5 (2D) or degree-3 (3D) rule plus nu/2 u'B u.
double dense_objective(const Mesh& mesh, const DenseModel& model, const ScalarField& target,
                       const Vector& u);

/// min 1/2 u'Au - f'u + penalty over lower <= u <= upper, where the penalty is
///   1/(2 gamma) sum_j w_j max(0, shift_j + gamma (y_j - b_j))^2
/// + 1/(2 gamma) sum_j w_j max(0, lower_shift_j + gamma (a_j - y_j))^2
/// with y = S_omega u. Infinite entries disable a bound.
struct DenseQp {
  Matrix A;
  Vector f;
  Vector lower;
  Vector upper;
  double gamma = 0.0;
  Matrix S_omega;   // rows of S at the constrained nodes
  Vector weights;   // lumped masses at the constrained nodes
  Vector state_upper;
  Vector shift;
  Vector state_lower;
  Vector lower_shift;
};

struct DenseQpSolution {
  Vector u;
  /// Signed multiplier of the box: positive at the upper bound, negative at the lower.
  Vector lambda;
  std::vector<Index> at_upper;
  std::vector<Index> at_lower;
  std::vector<Index> state_upper_active;  // positions into the constrained rows
  std::vector<Index> state_lower_active;
  long sweeps = 0;
  bool verified = false;
};

/// Builds the QP of a dense model. Pass gamma = 0 for no state bound.
DenseQp make_dense_qp(const DenseModel& model, const Vector& lower, const Vector& upper,
                      double gamma = 0.0, const Vector& state_upper = {},
                      const Vector& state_lower = {});

/// Coordinate descent with exact one-dimensional minimization, followed by an
/// exact solve on the identified active sets and a KKT check.
DenseQpSolution solve_dense_qp(const DenseQp& qp, long max_sweeps = 2000000);

/// Objective value of the QP (without constant terms).
double dense_qp_value(const DenseQp& qp, const Vector& u);

}  // namespace dck::reference
