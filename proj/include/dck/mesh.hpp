#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dck/types.hpp"

namespace dck {

/// Node-index tuple of a simplex. Triangles use the first three entries.
using Cell = std::array<Index, 4>;

struct BoundaryFacet {
  std::array<Index, 3> nodes{};  // segments use the first two entries
  Index cell = -1;               // the single cell owning this facet
};

enum class MeshFamily { Generic, Pentagon, Cube };

/// Parent edge of a node in a nested hierarchy. Coarse nodes have a == b.
struct NodeParents {
  Index a = -1;
  Index b = -1;
};

/// Conforming simplicial mesh in 2D (triangles) or 3D (tetrahedra).
///
/// Immutable once constructed. The constructor derives the boundary facets and
/// checks that every cell has positive signed volume and that no facet is
/// shared by more than two cells.
class Mesh {
 public:
  Mesh(int dim, std::vector<Point> nodes, std::vector<Cell> cells, double h,
       int level = 0, MeshFamily family = MeshFamily::Generic, int subdivisions = 0,
       std::vector<NodeParents> parents = {}, Index coarse_node_count = 0);

  int dim() const { return dim_; }
  Index num_nodes() const { return static_cast<Index>(nodes_.size()); }
  Index num_cells() const { return static_cast<Index>(cells_.size()); }
  int nodes_per_cell() const { return dim_ + 1; }

  const std::vector<Point>& nodes() const { return nodes_; }
  const Point& node(Index i) const { return nodes_[i]; }
  const std::vector<Cell>& cells() const { return cells_; }
  const Cell& cell(Index c) const { return cells_[c]; }
  const std::vector<BoundaryFacet>& boundary_facets() const { return boundary_facets_; }

  /// Sorted global indices of the nodes lying on some boundary facet.
  const std::vector<Index>& boundary_nodes() const { return boundary_nodes_; }
  bool is_boundary_node(Index i) const { return on_boundary_[i] != 0; }

  double h() const { return h_; }
  int level() const { return level_; }
  MeshFamily family() const { return family_; }
  int subdivisions() const { return subdivisions_; }

  /// Nested-refinement provenance; empty for a base mesh.
  const std::vector<NodeParents>& parents() const { return parents_; }
  Index coarse_node_count() const { return coarse_node_count_; }

  double cell_volume(Index c) const;
  double facet_measure(const BoundaryFacet& f) const;

 private:
  void build_boundary();

  int dim_;
  std::vector<Point> nodes_;
  std::vector<Cell> cells_;
  std::vector<BoundaryFacet> boundary_facets_;
  std::vector<Index> boundary_nodes_;
  std::vector<char> on_boundary_;
  double h_;
  int level_;
  MeshFamily family_;
  int subdivisions_;
  std::vector<NodeParents> parents_;
  Index coarse_node_count_;
};

/// Signed volume of the simplex spanned by the given vertices (d+1 of them).
double simplex_signed_volume(int dim, std::span<const Point> vertices);

/// Structured triangulation of the pentagon with vertices (-1/2,-1/2),
/// (1/2,-1/2), (1/2,0), (0,1/2), (-1/2,1/2). Grid step 1/n, squares split along
/// the anti-diagonal, cells above x + y = 1/2 dropped. Requires even n >= 2.
Mesh build_pentagon_mesh(int n);

/// Kuhn triangulation of (-1/2,1/2)^3 with n cubes per axis, 6 tetrahedra per cube.
Mesh build_cube_mesh(int n);

/// Uniform refinement: red refinement in 2D, rebuild with 2n for cube meshes.
/// The coarse nodes keep their indices and coordinates and come first.
Mesh refine_uniform(const Mesh& mesh);

/// Closed region used to pick the constrained nodes (e.g. a ball).
using RegionPredicate = std::function<bool(const Point&)>;

RegionPredicate closed_ball(const Point& center, double radius);

struct IndexSets {
  std::vector<Index> interior;  // sorted
  std::vector<Index> boundary;  // sorted
  std::vector<Index> omega;     // sorted, subset of interior

  // Global node -> position in `interior` / `boundary`, -1 when absent.
  std::vector<Index> interior_pos;
  std::vector<Index> boundary_pos;

  Index num_nodes() const { return static_cast<Index>(interior_pos.size()); }
  Index num_interior() const { return static_cast<Index>(interior.size()); }
  Index num_boundary() const { return static_cast<Index>(boundary.size()); }
};

/// Splits the nodes into interior / boundary and picks the interior nodes in
/// the closed region. Throws if a boundary node falls inside the region.
IndexSets classify_indices(const Mesh& mesh, const RegionPredicate& omega = nullptr);

/// P1 interpolation of a nodal field from `coarse` onto its refinement `fine`.
FieldVector prolong(const FieldVector& coarse_values, const Mesh& coarse, const Mesh& fine);

/// Same as prolong() for a boundary vector. When bounds are given the result is
/// clipped nodewise into [lower, upper] (vectors over the fine boundary).
BoundaryVector prolong_boundary(const BoundaryVector& coarse_values, const Mesh& coarse,
                                const Mesh& fine, const BoundaryVector* lower = nullptr,
                                const BoundaryVector* upper = nullptr);

/// Writes the mesh and nodal fields as a legacy ASCII VTK unstructured grid.
struct NamedField {
  std::string name;
  const FieldVector* values;
};
void write_vtk(const std::string& path, const Mesh& mesh, std::span<const NamedField> fields);

}  // namespace dck
