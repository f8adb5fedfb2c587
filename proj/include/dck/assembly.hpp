#pragma once

#include "dck/mesh.hpp"
#include "dck/quadrature.hpp"

namespace dck {

/// P1 finite element matrices of a mesh.
///
/// `stiffness` and `mass` are the full N x N matrices, `boundary_mass` is N x N
/// with nonzeros only on boundary x boundary, and `lumped_omega` holds the
/// diagonal of the lumped mass restricted to the constrained region (zero off it).
struct FemMatrices {
  SparseMatrix stiffness;
  SparseMatrix mass;
  SparseMatrix boundary_mass;
  Vector lumped_omega;
};

/// Element mass matrix of a simplex: vol / ((d+1)(d+2)) * (1 + delta_ij).
Eigen::Matrix4d element_mass(int dim, double volume);

/// Element stiffness matrix of a simplex from its vertex coordinates.
Eigen::Matrix4d element_stiffness(int dim, std::span<const Point> vertices);

/// Boundary mass of one facet by the mid-side rule (exact for quadratics).
Eigen::Matrix3d facet_mass(int dim, double measure);

/// Assembles K, M, B exactly and the lumped mass on the omega nodes.
/// Throws on a degenerate cell.
FemMatrices assemble(const Mesh& mesh, const IndexSets& sets);

/// Right-hand side (target, e_j)_Omega with the degree-4 rule.
FieldVector load_vector(const Mesh& mesh, const ScalarField& field);

/// L2 projection of a field onto the P1 space: solves M y = (field, e_j) by Jacobi CG.
FieldVector project_target(const Mesh& mesh, const FemMatrices& fem, const ScalarField& field);

/// Sum of element volumes and sum of boundary facet measures.
double domain_measure(const Mesh& mesh);
double boundary_measure(const Mesh& mesh);

}  // namespace dck
