#include "dck/assembly.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>

#include "dck/linalg.hpp"

namespace dck {

Eigen::Matrix4d element_mass(int dim, double volume) {
  const int n = dim + 1;
  const double scale = volume / ((dim + 1) * (dim + 2));
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = scale * (i == j ? 2.0 : 1.0);
  return m;
}

Eigen::Matrix4d element_stiffness(int dim, std::span<const Point> v) {
  Eigen::Matrix3d jac = Eigen::Matrix3d::Identity();
  for (int k = 0; k < dim; ++k)
    for (int d = 0; d < dim; ++d) jac(d, k) = v[k + 1][d] - v[0][d];
  const double vol = std::abs(simplex_signed_volume(dim, v));
  if (!(vol > 0)) throw std::invalid_argument("degenerate cell in assembly");
  // Row k of J^{-1} is the gradient of barycentric coordinate k+1.
  const Eigen::MatrixXd jinv = jac.topLeftCorner(dim, dim).inverse();
  Eigen::Matrix<double, 4, 3> grad = Eigen::Matrix<double, 4, 3>::Zero();
  for (int k = 0; k < dim; ++k)
    for (int d = 0; d < dim; ++d) grad(k + 1, d) = jinv(k, d);
  for (int d = 0; d < dim; ++d) grad(0, d) = -grad.block(1, d, dim, 1).sum();
  Eigen::Matrix4d k = Eigen::Matrix4d::Zero();
  const int n = dim + 1;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) k(i, j) = k(j, i) = vol * grad.row(i).dot(grad.row(j));
  return k;
}

Eigen::Matrix3d facet_mass(int dim, double measure) {
  // Simpson on segments, edge midpoints on triangles: both exact for quadratics.
  struct Node {
    std::array<double, 3> bary;
    double weight;
  };
  static const std::array<Node, 3> segment{{{{1, 0, 0}, 1.0 / 6}, {{0.5, 0.5, 0}, 4.0 / 6}, {{0, 1, 0}, 1.0 / 6}}};
  static const std::array<Node, 3> triangle{
      {{{0.5, 0.5, 0}, 1.0 / 3}, {{0, 0.5, 0.5}, 1.0 / 3}, {{0.5, 0, 0.5}, 1.0 / 3}}};
  const auto& rule = dim == 2 ? segment : triangle;
  const int n = dim;
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  for (const Node& q : rule)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) += measure * q.weight * q.bary[i] * q.bary[j];
  return m;
}

FemMatrices assemble(const Mesh& mesh, const IndexSets& sets) {
  const Index n = mesh.num_nodes();
  const int npc = mesh.nodes_per_cell();
  std::vector<Triplet> kt, mt, bt;
  kt.reserve(static_cast<std::size_t>(mesh.num_cells()) * npc * npc);
  mt.reserve(kt.capacity());
  for (Index c = 0; c < mesh.num_cells(); ++c) {
    const Cell& cell = mesh.cell(c);
    std::array<Point, 4> v{};
    for (int k = 0; k < npc; ++k) v[k] = mesh.node(cell[k]);
    const double vol = mesh.cell_volume(c);
    if (!(vol > 0)) throw std::invalid_argument("degenerate cell in assembly");
    const Eigen::Matrix4d ke = element_stiffness(mesh.dim(), std::span<const Point>(v.data(), npc));
    const Eigen::Matrix4d me = element_mass(mesh.dim(), vol);
    for (int i = 0; i < npc; ++i) {
      for (int j = 0; j < npc; ++j) {
        kt.emplace_back(cell[i], cell[j], ke(i, j));
        mt.emplace_back(cell[i], cell[j], me(i, j));
      }
    }
  }
  for (const BoundaryFacet& f : mesh.boundary_facets()) {
    const Eigen::Matrix3d be = facet_mass(mesh.dim(), mesh.facet_measure(f));
    for (int i = 0; i < mesh.dim(); ++i)
      for (int j = 0; j < mesh.dim(); ++j) bt.emplace_back(f.nodes[i], f.nodes[j], be(i, j));
  }
  FemMatrices fem;
  fem.stiffness.resize(n, n);
  fem.mass.resize(n, n);
  fem.boundary_mass.resize(n, n);
  fem.stiffness.setFromTriplets(kt.begin(), kt.end());
  fem.mass.setFromTriplets(mt.begin(), mt.end());
  fem.boundary_mass.setFromTriplets(bt.begin(), bt.end());

  fem.lumped_omega = Vector::Zero(n);
  const Vector col_sums = Vector::Ones(n).transpose() * fem.mass;
  for (Index j : sets.omega) fem.lumped_omega[j] = col_sums[j];
  return fem;
}

FieldVector load_vector(const Mesh& mesh, const ScalarField& field) {
  FieldVector rhs = FieldVector::Zero(mesh.num_nodes());
  const int npc = mesh.nodes_per_cell();
  for (Index c = 0; c < mesh.num_cells(); ++c) {
    const Cell& cell = mesh.cell(c);
    for_each_quadrature_point(mesh, c, field.cut(),
                              [&](const Point& x, double w, const std::array<double, 4>& b) {
                                const double fx = field(x) * w;
                                for (int k = 0; k < npc; ++k) rhs[cell[k]] += fx * b[k];
                              });
  }
  return rhs;
}

FieldVector project_target(const Mesh& mesh, const FemMatrices& fem, const ScalarField& field) {
  const FieldVector rhs = load_vector(mesh, field);
  // The consistent mass matrix is uniformly well conditioned, so Jacobi CG
  // reaches round-off in a few dozen steps without any fill-in.
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(1e-15);
  cg.setMaxIterations(1000);
  cg.compute(fem.mass);
  FieldVector y = cg.solve(rhs);
  if (cg.info() != Eigen::Success && cg.error() > 1e-13)
    throw NotSpdError("mass projection did not converge");
  return y;
}

double domain_measure(const Mesh& mesh) {
  double total = 0;
  for (Index c = 0; c < mesh.num_cells(); ++c) total += mesh.cell_volume(c);
  return total;
}

double boundary_measure(const Mesh& mesh) {
  double total = 0;
  for (const BoundaryFacet& f : mesh.boundary_facets()) total += mesh.facet_measure(f);
  return total;
}

}  // namespace dck
