#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dck/mesh.hpp"

namespace dck {

/// Quadrature point on the reference simplex, in barycentric coordinates.
/// Weights are relative to the simplex volume (they sum to 1).
struct QuadPoint {
  std::array<double, 4> bary;
  double weight;
};

/// Degree-4 rule on triangles (6 points, positive weights).
std::span<const QuadPoint> triangle_rule_deg4();
/// Degree-4 rule on tetrahedra (11 points).
std::span<const QuadPoint> tetrahedron_rule_deg4();
std::span<const QuadPoint> simplex_rule_deg4(int dim);

/// Hyperplane x[axis] = offset across which a field may jump.
struct AxisCut {
  int axis = 0;
  double offset = 0.0;
};

/// Scalar function on the domain, e.g. a target state.
class ScalarField {
 public:
  using Fn = std::function<double(const Point&)>;

  ScalarField() = default;
  ScalarField(Fn fn, int polynomial_degree = -1, std::optional<AxisCut> cut = std::nullopt)
      : fn_(std::move(fn)), degree_(polynomial_degree), cut_(cut) {}

  static ScalarField constant(double value);
  static ScalarField zero() { return constant(0.0); }
  /// |x|^2
  static ScalarField squared_norm();
  /// `below` for x[axis] < at, `above` for x[axis] > at.
  static ScalarField split(int axis, double at, double below, double above);
  static ScalarField linear(const Point& gradient, double offset);

  double operator()(const Point& x) const { return fn_(x); }
  explicit operator bool() const { return static_cast<bool>(fn_); }

  /// Polynomial degree if the field is a polynomial, -1 otherwise.
  int polynomial_degree() const { return degree_; }
  bool is_constant() const { return degree_ == 0; }
  const std::optional<AxisCut>& cut() const { return cut_; }

 private:
  Fn fn_;
  int degree_ = -1;
  std::optional<AxisCut> cut_;
};

/// Calls `visit(x, weight, bary)` for every quadrature point of cell `c`, where
/// `bary` are the barycentric coordinates of x in the cell. Cells straddling the
/// field's cut are subdivided so that no piece crosses it (2D only).
void for_each_quadrature_point(const Mesh& mesh, Index c, const std::optional<AxisCut>& cut,
                               const std::function<void(const Point&, double,
                                                        const std::array<double, 4>&)>& visit);

/// Barycentric coordinates of x with respect to cell c.
std::array<double, 4> barycentric(const Mesh& mesh, Index c, const Point& x);

/// \int_\Omega (y_h - target)^2 for the P1 function with nodal values y.
double squared_l2_error(const Mesh& mesh, const FieldVector& y, const ScalarField& target);

}  // namespace dck
