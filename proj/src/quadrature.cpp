#include "dck/quadrature.hpp"

#include <array>
#include <cmath>

#include <Eigen/Dense>

namespace dck {

namespace {

constexpr double kTriA1 = 0.44594849091596488631832925388305;
constexpr double kTriW1 = 0.22338158967801146569500700843312;
constexpr double kTriA2 = 0.091576213509770743459571463402202;
constexpr double kTriW2 = 0.10995174365532186763832632490021;

const std::array<QuadPoint, 6> kTriangle4{{
    {{kTriA1, kTriA1, 1 - 2 * kTriA1, 0}, kTriW1},
    {{kTriA1, 1 - 2 * kTriA1, kTriA1, 0}, kTriW1},
    {{1 - 2 * kTriA1, kTriA1, kTriA1, 0}, kTriW1},
    {{kTriA2, kTriA2, 1 - 2 * kTriA2, 0}, kTriW2},
    {{kTriA2, 1 - 2 * kTriA2, kTriA2, 0}, kTriW2},
    {{1 - 2 * kTriA2, kTriA2, kTriA2, 0}, kTriW2},
}};

// Keast's 11-point rule; the centroid weight is negative.
constexpr double kTetW0 = -444.0 / 5625.0;
constexpr double kTetW1 = 2058.0 / 45000.0;
constexpr double kTetW2 = 336.0 / 2250.0;
constexpr double kTetA = 1.0 / 14.0;
constexpr double kTetB = 11.0 / 14.0;
const double kTetC = (1.0 + std::sqrt(5.0 / 14.0)) / 4.0;
const double kTetD = (1.0 - std::sqrt(5.0 / 14.0)) / 4.0;

const std::array<QuadPoint, 11> kTetrahedron4{{
    {{0.25, 0.25, 0.25, 0.25}, kTetW0},
    {{kTetB, kTetA, kTetA, kTetA}, kTetW1},
    {{kTetA, kTetB, kTetA, kTetA}, kTetW1},
    {{kTetA, kTetA, kTetB, kTetA}, kTetW1},
    {{kTetA, kTetA, kTetA, kTetB}, kTetW1},
    {{kTetC, kTetC, kTetD, kTetD}, kTetW2},
    {{kTetC, kTetD, kTetC, kTetD}, kTetW2},
    {{kTetC, kTetD, kTetD, kTetC}, kTetW2},
    {{kTetD, kTetC, kTetC, kTetD}, kTetW2},
    {{kTetD, kTetC, kTetD, kTetC}, kTetW2},
    {{kTetD, kTetD, kTetC, kTetC}, kTetW2},
}};

Point combine(std::span<const Point> v, const std::array<double, 4>& bary, int count) {
  Point x{0, 0, 0};
  for (int k = 0; k < count; ++k)
    for (int d = 0; d < 3; ++d) x[d] += bary[k] * v[k][d];
  return x;
}

// Clips a convex polygon to the half-plane sign * (x[axis] - offset) <= 0.
std::vector<Point> clip_polygon(const std::vector<Point>& poly, const AxisCut& cut, double sign) {
  std::vector<Point> out;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % n];
    const double sp = sign * (p[cut.axis] - cut.offset);
    const double sq = sign * (q[cut.axis] - cut.offset);
    if (sp <= 0) out.push_back(p);
    if ((sp < 0 && sq > 0) || (sp > 0 && sq < 0)) {
      const double t = sp / (sp - sq);
      Point r{};
      for (int d = 0; d < 3; ++d) r[d] = p[d] + t * (q[d] - p[d]);
      r[cut.axis] = cut.offset;
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace

std::span<const QuadPoint> triangle_rule_deg4() { return kTriangle4; }
std::span<const QuadPoint> tetrahedron_rule_deg4() { return kTetrahedron4; }
std::span<const QuadPoint> simplex_rule_deg4(int dim) {
  return dim == 2 ? triangle_rule_deg4() : tetrahedron_rule_deg4();
}

ScalarField ScalarField::constant(double value) {
  return ScalarField([value](const Point&) { return value; }, 0);
}

ScalarField ScalarField::squared_norm() {
  return ScalarField([](const Point& x) { return x[0] * x[0] + x[1] * x[1] + x[2] * x[2]; }, 2);
}

ScalarField ScalarField::split(int axis, double at, double below, double above) {
  return ScalarField([=](const Point& x) { return x[axis] > at ? above : below; }, -1,
                     AxisCut{axis, at});
}

ScalarField ScalarField::linear(const Point& g, double offset) {
  return ScalarField([=](const Point& x) { return offset + g[0] * x[0] + g[1] * x[1] + g[2] * x[2]; },
                     1);
}

std::array<double, 4> barycentric(const Mesh& mesh, Index c, const Point& x) {
  const Cell& cell = mesh.cell(c);
  const int dim = mesh.dim();
  Eigen::Matrix3d jac = Eigen::Matrix3d::Identity();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  const Point& p0 = mesh.node(cell[0]);
  for (int k = 0; k < dim; ++k) {
    const Point& pk = mesh.node(cell[k + 1]);
    for (int d = 0; d < dim; ++d) jac(d, k) = pk[d] - p0[d];
  }
  for (int d = 0; d < dim; ++d) rhs[d] = x[d] - p0[d];
  const Eigen::Vector3d lam = jac.partialPivLu().solve(rhs);
  std::array<double, 4> b{0, 0, 0, 0};
  double sum = 0;
  for (int k = 0; k < dim; ++k) {
    b[k + 1] = lam[k];
    sum += lam[k];
  }
  b[0] = 1.0 - sum;
  return b;
}

void for_each_quadrature_point(
    const Mesh& mesh, Index c, const std::optional<AxisCut>& cut,
    const std::function<void(const Point&, double, const std::array<double, 4>&)>& visit) {
  const int dim = mesh.dim();
  const int npc = mesh.nodes_per_cell();
  const Cell& cell = mesh.cell(c);
  std::array<Point, 4> v{};
  for (int k = 0; k < npc; ++k) v[k] = mesh.node(cell[k]);
  const double vol = mesh.cell_volume(c);
  const auto rule = simplex_rule_deg4(dim);

  bool straddles = false;
  if (cut) {
    bool below = false, above = false;
    for (int k = 0; k < npc; ++k) {
      const double s = v[k][cut->axis] - cut->offset;
      below |= s < 0;
      above |= s > 0;
    }
    straddles = below && above;
  }
  if (!straddles) {
    for (const QuadPoint& q : rule)
      visit(combine(std::span<const Point>(v.data(), npc), q.bary, npc), q.weight * vol, q.bary);
    return;
  }
  if (dim != 2) throw std::invalid_argument("discontinuous fields are only supported in 2D");

  const std::vector<Point> tri{v[0], v[1], v[2]};
  for (double sign : {1.0, -1.0}) {
    const std::vector<Point> piece = clip_polygon(tri, *cut, sign);
    for (std::size_t k = 1; k + 1 < piece.size(); ++k) {
      const std::array<Point, 3> sub{piece[0], piece[k], piece[k + 1]};
      const double area = std::abs(simplex_signed_volume(2, sub));
      if (area <= 0) continue;
      for (const QuadPoint& q : rule) {
        const Point x = combine(sub, q.bary, 3);
        visit(x, q.weight * area, barycentric(mesh, c, x));
      }
    }
  }
}

double squared_l2_error(const Mesh& mesh, const FieldVector& y, const ScalarField& target) {
  if (y.size() != mesh.num_nodes()) throw std::invalid_argument("field length mismatch");
  const int npc = mesh.nodes_per_cell();
  double total = 0;
  for (Index c = 0; c < mesh.num_cells(); ++c) {
    const Cell& cell = mesh.cell(c);
    for_each_quadrature_point(mesh, c, target.cut(),
                              [&](const Point& x, double w, const std::array<double, 4>& b) {
                                double yh = 0;
                                for (int k = 0; k < npc; ++k) yh += b[k] * y[cell[k]];
                                const double e = yh - target(x);
                                total += w * e * e;
                              });
  }
  return total;
}

}  // namespace dck
