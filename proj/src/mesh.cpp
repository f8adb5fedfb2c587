#include "dck/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>

namespace dck {

namespace {

Point sub(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Point cross(const Point& a, const Point& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm(const Point& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

}  // namespace

double simplex_signed_volume(int dim, std::span<const Point> v) {
  if (dim == 2) {
    const Point e1 = sub(v[1], v[0]);
    const Point e2 = sub(v[2], v[0]);
    return 0.5 * (e1[0] * e2[1] - e1[1] * e2[0]);
  }
  const Point e1 = sub(v[1], v[0]);
  const Point e2 = sub(v[2], v[0]);
  const Point e3 = sub(v[3], v[0]);
  const Point c = cross(e2, e3);
  return (e1[0] * c[0] + e1[1] * c[1] + e1[2] * c[2]) / 6.0;
}

Mesh::Mesh(int dim, std::vector<Point> nodes, std::vector<Cell> cells, double h, int level,
           MeshFamily family, int subdivisions, std::vector<NodeParents> parents,
           Index coarse_node_count)
    : dim_(dim),
      nodes_(std::move(nodes)),
      cells_(std::move(cells)),
      h_(h),
      level_(level),
      family_(family),
      subdivisions_(subdivisions),
      parents_(std::move(parents)),
      coarse_node_count_(coarse_node_count) {
  if (dim_ != 2 && dim_ != 3) throw std::invalid_argument("mesh dimension must be 2 or 3");
  if (cells_.empty()) throw std::invalid_argument("mesh has no cells");
  const Index n = num_nodes();
  for (Index c = 0; c < num_cells(); ++c) {
    for (int k = 0; k < nodes_per_cell(); ++k) {
      if (cells_[c][k] < 0 || cells_[c][k] >= n)
        throw std::invalid_argument("cell references a node out of range");
    }
    if (!(cell_volume(c) > 0.0))
      throw std::invalid_argument("cell " + std::to_string(c) + " has non-positive volume");
  }
  if (!parents_.empty() && static_cast<Index>(parents_.size()) != n)
    throw std::invalid_argument("parent table size does not match node count");
  build_boundary();
}

double Mesh::cell_volume(Index c) const {
  std::array<Point, 4> v{};
  for (int k = 0; k < nodes_per_cell(); ++k) v[k] = nodes_[cells_[c][k]];
  return simplex_signed_volume(dim_, std::span<const Point>(v.data(), nodes_per_cell()));
}

double Mesh::facet_measure(const BoundaryFacet& f) const {
  const Point& a = nodes_[f.nodes[0]];
  const Point& b = nodes_[f.nodes[1]];
  if (dim_ == 2) return norm(sub(b, a));
  const Point& c = nodes_[f.nodes[2]];
  return 0.5 * norm(cross(sub(b, a), sub(c, a)));
}

void Mesh::build_boundary() {
  struct Entry {
    std::array<Index, 3> key;
    std::array<Index, 3> ordered;
    Index cell;
  };
  const int nf = dim_;  // nodes per facet
  std::vector<Entry> facets;
  facets.reserve(static_cast<std::size_t>(num_cells()) * nodes_per_cell());
  for (Index c = 0; c < num_cells(); ++c) {
    for (int skip = 0; skip < nodes_per_cell(); ++skip) {
      Entry e{{-1, -1, -1}, {-1, -1, -1}, c};
      int m = 0;
      for (int k = 0; k < nodes_per_cell(); ++k) {
        if (k == skip) continue;
        e.ordered[m++] = cells_[c][k];
      }
      e.key = e.ordered;
      std::sort(e.key.begin(), e.key.begin() + nf);
      facets.push_back(e);
    }
  }
  std::sort(facets.begin(), facets.end(), [](const Entry& x, const Entry& y) {
    return x.key != y.key ? x.key < y.key : x.cell < y.cell;
  });

  on_boundary_.assign(nodes_.size(), 0);
  for (std::size_t i = 0; i < facets.size();) {
    std::size_t j = i + 1;
    while (j < facets.size() && facets[j].key == facets[i].key) ++j;
    const std::size_t count = j - i;
    if (count > 2) throw std::invalid_argument("non-manifold mesh: facet shared by >2 cells");
    if (count == 1) {
      BoundaryFacet f;
      f.nodes = facets[i].ordered;
      f.cell = facets[i].cell;
      boundary_facets_.push_back(f);
      for (int k = 0; k < nf; ++k) on_boundary_[f.nodes[k]] = 1;
    }
    i = j;
  }
  for (Index v = 0; v < num_nodes(); ++v)
    if (on_boundary_[v]) boundary_nodes_.push_back(v);
}

Mesh build_pentagon_mesh(int n) {
  if (n < 2 || n % 2 != 0)
    throw std::invalid_argument("pentagon mesh needs an even subdivision count n >= 2");
  const int cut = 3 * n / 2;  // grid line i + j = cut is x + y = 1/2
  const double step = 1.0 / n;
  std::vector<Index> id(static_cast<std::size_t>(n + 1) * (n + 1), -1);
  std::vector<Point> nodes;
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      if (i + j > cut) continue;
      id[j * (n + 1) + i] = static_cast<Index>(nodes.size());
      nodes.push_back({-0.5 + i * step, -0.5 + j * step, 0.0});
    }
  }
  auto at = [&](int i, int j) { return id[j * (n + 1) + i]; };
  std::vector<Cell> cells;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      if (i + j + 1 > cut) continue;
      cells.push_back({at(i, j), at(i + 1, j), at(i, j + 1), -1});
      if (i + j + 2 <= cut) cells.push_back({at(i + 1, j), at(i + 1, j + 1), at(i, j + 1), -1});
    }
  }
  return Mesh(2, std::move(nodes), std::move(cells), step, 0, MeshFamily::Pentagon, n);
}

namespace {

std::vector<Cell> kuhn_cells(int n, const std::vector<Point>& nodes,
                             const std::function<Index(int, int, int)>& at) {
  static constexpr std::array<std::array<int, 3>, 6> perms{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  std::vector<Cell> cells;
  cells.reserve(static_cast<std::size_t>(6) * n * n * n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        for (const auto& p : perms) {
          std::array<int, 3> g{i, j, k};
          Cell c{};
          c[0] = at(g[0], g[1], g[2]);
          for (int s = 0; s < 3; ++s) {
            g[p[s]] += 1;
            c[s + 1] = at(g[0], g[1], g[2]);
          }
          std::array<Point, 4> v{nodes[c[0]], nodes[c[1]], nodes[c[2]], nodes[c[3]]};
          if (simplex_signed_volume(3, v) < 0.0) std::swap(c[2], c[3]);
          cells.push_back(c);
        }
      }
    }
  }
  return cells;
}

}  // namespace

Mesh build_cube_mesh(int n) {
  if (n < 1) throw std::invalid_argument("cube mesh needs n >= 1");
  const double step = 1.0 / n;
  const int m = n + 1;
  std::vector<Point> nodes;
  nodes.reserve(static_cast<std::size_t>(m) * m * m);
  for (int k = 0; k <= n; ++k)
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i) nodes.push_back({-0.5 + i * step, -0.5 + j * step, -0.5 + k * step});
  auto at = [m](int i, int j, int k) { return static_cast<Index>(i + m * (j + m * k)); };
  auto cells = kuhn_cells(n, nodes, at);
  return Mesh(3, std::move(nodes), std::move(cells), step, 0, MeshFamily::Cube, n);
}

namespace {

Mesh refine_red_2d(const Mesh& mesh) {
  std::vector<Point> nodes = mesh.nodes();
  std::vector<NodeParents> parents(nodes.size());
  for (Index i = 0; i < mesh.num_nodes(); ++i) parents[i] = {i, i};
  std::map<std::pair<Index, Index>, Index> midpoint;
  auto mid = [&](Index a, Index b) {
    const auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const Index id = static_cast<Index>(nodes.size());
    const Point& pa = mesh.node(a);
    const Point& pb = mesh.node(b);
    nodes.push_back({0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]), 0.5 * (pa[2] + pb[2])});
    parents.push_back({key.first, key.second});
    midpoint.emplace(key, id);
    return id;
  };
  std::vector<Cell> cells;
  cells.reserve(4 * mesh.cells().size());
  for (const Cell& c : mesh.cells()) {
    const Index a = c[0], b = c[1], d = c[2];
    const Index ab = mid(a, b), bd = mid(b, d), da = mid(d, a);
    cells.push_back({a, ab, da, -1});
    cells.push_back({ab, b, bd, -1});
    cells.push_back({da, bd, d, -1});
    cells.push_back({ab, bd, da, -1});
  }
  return Mesh(2, std::move(nodes), std::move(cells), 0.5 * mesh.h(), mesh.level() + 1,
              mesh.family(), mesh.family() == MeshFamily::Pentagon ? 2 * mesh.subdivisions() : 0,
              std::move(parents), mesh.num_nodes());
}

Mesh refine_cube(const Mesh& coarse) {
  const int nc = coarse.subdivisions();
  const int n = 2 * nc;
  const int m = n + 1;
  const int mc = nc + 1;
  const double step = 1.0 / n;
  const std::size_t total = static_cast<std::size_t>(m) * m * m;
  std::vector<Index> id(total, -1);
  std::vector<Point> nodes(total);
  std::vector<NodeParents> parents(total);
  // Coarse numbering need not be lexicographic after earlier refinements.
  std::vector<Index> coarse_lookup(static_cast<std::size_t>(mc) * mc * mc, -1);
  for (Index v = 0; v < coarse.num_nodes(); ++v) {
    const Point& x = coarse.node(v);
    const auto grid = [&](int d) { return static_cast<int>(std::lround((x[d] + 0.5) * nc)); };
    coarse_lookup[grid(0) + static_cast<std::size_t>(mc) * (grid(1) + static_cast<std::size_t>(mc) * grid(2))] = v;
  }
  auto coarse_id = [&](int i, int j, int k) {
    return coarse_lookup[i + static_cast<std::size_t>(mc) * (j + static_cast<std::size_t>(mc) * k)];
  };
  Index next = static_cast<Index>(mc) * mc * mc;
  for (int k = 0; k <= n; ++k) {
    for (int j = 0; j <= n; ++j) {
      for (int i = 0; i <= n; ++i) {
        const std::size_t g = i + static_cast<std::size_t>(m) * (j + static_cast<std::size_t>(m) * k);
        Index v;
        if (i % 2 == 0 && j % 2 == 0 && k % 2 == 0) {
          v = coarse_id(i / 2, j / 2, k / 2);
          parents[v] = {v, v};
        } else {
          v = next++;
          parents[v] = {coarse_id(i / 2, j / 2, k / 2), coarse_id((i + 1) / 2, (j + 1) / 2, (k + 1) / 2)};
        }
        id[g] = v;
        nodes[v] = {-0.5 + i * step, -0.5 + j * step, -0.5 + k * step};
      }
    }
  }
  // Coarse coordinates are carried over bit-exactly.
  for (Index v = 0; v < coarse.num_nodes(); ++v) nodes[v] = coarse.node(v);
  auto at = [&](int i, int j, int k) {
    return id[i + static_cast<std::size_t>(m) * (j + static_cast<std::size_t>(m) * k)];
  };
  auto cells = kuhn_cells(n, nodes, at);
  return Mesh(3, std::move(nodes), std::move(cells), step, coarse.level() + 1, MeshFamily::Cube, n,
              std::move(parents), coarse.num_nodes());
}

}  // namespace

Mesh refine_uniform(const Mesh& mesh) {
  if (mesh.dim() == 2) return refine_red_2d(mesh);
  if (mesh.family() == MeshFamily::Cube) return refine_cube(mesh);
  throw std::invalid_argument("uniform refinement of generic 3D meshes is not supported");
}

RegionPredicate closed_ball(const Point& center, double radius) {
  const double r2 = radius * radius * (1.0 + 1e-12);
  return [center, r2](const Point& x) {
    const double dx = x[0] - center[0], dy = x[1] - center[1], dz = x[2] - center[2];
    return dx * dx + dy * dy + dz * dz <= r2;
  };
}

IndexSets classify_indices(const Mesh& mesh, const RegionPredicate& omega) {
  IndexSets s;
  const Index n = mesh.num_nodes();
  s.interior_pos.assign(n, -1);
  s.boundary_pos.assign(n, -1);
  for (Index v = 0; v < n; ++v) {
    const bool in_omega = omega && omega(mesh.node(v));
    if (mesh.is_boundary_node(v)) {
      if (in_omega)
        throw std::invalid_argument("constraint region touches the boundary at node " +
                                    std::to_string(v));
      s.boundary_pos[v] = static_cast<Index>(s.boundary.size());
      s.boundary.push_back(v);
    } else {
      s.interior_pos[v] = static_cast<Index>(s.interior.size());
      s.interior.push_back(v);
      if (in_omega) s.omega.push_back(v);
    }
  }
  return s;
}

namespace {

void check_nested(const Mesh& coarse, const Mesh& fine) {
  const auto& parents = fine.parents();
  if (parents.empty() || fine.coarse_node_count() != coarse.num_nodes() ||
      fine.dim() != coarse.dim())
    throw std::invalid_argument("meshes are not a nested coarse/fine pair");
  for (Index v = 0; v < coarse.num_nodes(); ++v) {
    if (fine.node(v) != coarse.node(v))
      throw std::invalid_argument("meshes are not a nested coarse/fine pair");
  }
}

}  // namespace

FieldVector prolong(const FieldVector& coarse_values, const Mesh& coarse, const Mesh& fine) {
  check_nested(coarse, fine);
  if (coarse_values.size() != coarse.num_nodes())
    throw std::invalid_argument("prolong: vector length does not match coarse mesh");
  FieldVector out(fine.num_nodes());
  const auto& parents = fine.parents();
  for (Index v = 0; v < fine.num_nodes(); ++v) {
    const NodeParents& p = parents[v];
    out[v] = p.a == p.b ? coarse_values[p.a] : 0.5 * (coarse_values[p.a] + coarse_values[p.b]);
  }
  return out;
}

BoundaryVector prolong_boundary(const BoundaryVector& coarse_values, const Mesh& coarse,
                                const Mesh& fine, const BoundaryVector* lower,
                                const BoundaryVector* upper) {
  const auto& cb = coarse.boundary_nodes();
  if (coarse_values.size() != static_cast<Index>(cb.size()))
    throw std::invalid_argument("prolong_boundary: vector length does not match coarse boundary");
  check_nested(coarse, fine);
  // Boundary midpoints of a convex domain have both parents on the boundary,
  // so zeros on interior coarse nodes never leak into the result.
  FieldVector full = FieldVector::Zero(coarse.num_nodes());
  for (std::size_t k = 0; k < cb.size(); ++k) full[cb[k]] = coarse_values[static_cast<Index>(k)];
  const FieldVector fine_full = prolong(full, coarse, fine);
  const auto& fb = fine.boundary_nodes();
  BoundaryVector out(static_cast<Index>(fb.size()));
  for (std::size_t k = 0; k < fb.size(); ++k) out[static_cast<Index>(k)] = fine_full[fb[k]];
  if (lower) out = out.cwiseMax(*lower);
  if (upper) out = out.cwiseMin(*upper);
  return out;
}

void write_vtk(const std::string& path, const Mesh& mesh, std::span<const NamedField> fields) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << std::setprecision(17);
  os << "# vtk DataFile Version 3.0\n";
  os << "dck P1 mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << mesh.num_nodes() << " double\n";
  for (const Point& p : mesh.nodes()) os << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  const int per = mesh.nodes_per_cell();
  os << "CELLS " << mesh.num_cells() << ' ' << mesh.num_cells() * (per + 1) << '\n';
  for (const Cell& c : mesh.cells()) {
    os << per;
    for (int k = 0; k < per; ++k) os << ' ' << c[k];
    os << '\n';
  }
  os << "CELL_TYPES " << mesh.num_cells() << '\n';
  const int type = mesh.dim() == 2 ? 5 : 10;
  for (Index c = 0; c < mesh.num_cells(); ++c) os << type << '\n';
  if (fields.empty()) return;
  os << "POINT_DATA " << mesh.num_nodes() << '\n';
  for (const NamedField& f : fields) {
    if (f.values->size() != mesh.num_nodes())
      throw std::invalid_argument("field " + f.name + " has wrong length");
    os << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
    for (Index v = 0; v < mesh.num_nodes(); ++v) os << (*f.values)[v] << '\n';
  }
}

}  // namespace dck
