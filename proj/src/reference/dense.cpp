#include "dck/reference/dense.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace dck::reference {

namespace {

struct Rule {
  std::vector<std::array<double, 4>> bary;
  std::vector<double> weight;  // relative to the simplex volume
};

// Radon's 7-point rule, exact to degree 5 on triangles.
Rule triangle_rule() {
  Rule r;
  const double s = std::sqrt(15.0);
  const double a1 = (6.0 - s) / 21.0, w1 = (155.0 - s) / 1200.0;
  const double a2 = (6.0 + s) / 21.0, w2 = (155.0 + s) / 1200.0;
  r.bary.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3, 0});
  r.weight.push_back(9.0 / 40.0);
  for (auto [a, w] : {std::pair{a1, w1}, std::pair{a2, w2}}) {
    const double b = 1 - 2 * a;
    r.bary.push_back({a, a, b, 0});
    r.bary.push_back({a, b, a, 0});
    r.bary.push_back({b, a, a, 0});
    for (int k = 0; k < 3; ++k) r.weight.push_back(w);
  }
  return r;
}

// 5-point rule, exact to degree 3 on tetrahedra.
Rule tetrahedron_rule() {
  Rule r;
  r.bary.push_back({0.25, 0.25, 0.25, 0.25});
  r.weight.push_back(-0.8);
  for (int k = 0; k < 4; ++k) {
    std::array<double, 4> b{1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6};
    b[k] = 0.5;
    r.bary.push_back(b);
    r.weight.push_back(0.45);
  }
  return r;
}

struct LocalBasis {
  Matrix coeff;  // column k: constant term then gradient of basis function k
  double volume = 0.0;
  int dim = 2;

  double value(int k, const Point& x) const {
    double v = coeff(0, k);
    for (int d = 0; d < dim; ++d) v += coeff(1 + d, k) * x[d];
    return v;
  }
};

LocalBasis local_basis(const Mesh& mesh, const Cell& cell) {
  const int dim = mesh.dim();
  const int n = dim + 1;
  Matrix vander(n, n);
  for (int k = 0; k < n; ++k) {
    vander(k, 0) = 1.0;
    for (int d = 0; d < dim; ++d) vander(k, 1 + d) = mesh.node(cell[k])[d];
  }
  LocalBasis basis;
  basis.dim = dim;
  const double det = vander.determinant();
  basis.volume = std::abs(det) / (dim == 2 ? 2.0 : 6.0);
  if (!(basis.volume > 0)) throw std::invalid_argument("degenerate cell");
  basis.coeff = vander.inverse();
  return basis;
}

Point physical(const Mesh& mesh, const Cell& cell, const std::array<double, 4>& bary) {
  Point x{0, 0, 0};
  for (int k = 0; k <= mesh.dim(); ++k)
    for (int d = 0; d < 3; ++d) x[d] += bary[k] * mesh.node(cell[k])[d];
  return x;
}

void check_not_straddling(const Mesh& mesh, const Cell& cell, const ScalarField& field) {
  if (!field.cut()) return;
  bool below = false, above = false;
  for (int k = 0; k <= mesh.dim(); ++k) {
    const double s = mesh.node(cell[k])[field.cut()->axis] - field.cut()->offset;
    below |= s < 0;
    above |= s > 0;
  }
  if (below && above) throw std::invalid_argument("reference quadrature needs a mesh aligned with the cut");
}

using FacetKey = std::array<Index, 3>;

std::map<FacetKey, int> count_facets(const Mesh& mesh) {
  std::map<FacetKey, int> count;
  const int n = mesh.nodes_per_cell();
  for (const Cell& cell : mesh.cells()) {
    for (int skip = 0; skip < n; ++skip) {
      FacetKey key{-1, -1, -1};
      int m = 0;
      for (int k = 0; k < n; ++k)
        if (k != skip) key[m++] = cell[k];
      std::sort(key.begin(), key.begin() + m);
      ++count[key];
    }
  }
  return count;
}

double facet_measure(const Mesh& mesh, const FacetKey& f) {
  const Point& a = mesh.node(f[0]);
  const Point& b = mesh.node(f[1]);
  if (mesh.dim() == 2) return std::hypot(b[0] - a[0], b[1] - a[1]);
  const Point& c = mesh.node(f[2]);
  const Eigen::Vector3d u(b[0] - a[0], b[1] - a[1], b[2] - a[2]);
  const Eigen::Vector3d v(c[0] - a[0], c[1] - a[1], c[2] - a[2]);
  return 0.5 * u.cross(v).norm();
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

std::vector<Index> boundary_by_facet_count(const Mesh& mesh) {
  std::vector<char> flag(mesh.num_nodes(), 0);
  for (const auto& [key, n] : count_facets(mesh)) {
    if (n > 2) throw std::invalid_argument("facet shared by more than two cells");
    if (n == 1)
      for (int k = 0; k < mesh.dim(); ++k) flag[key[k]] = 1;
  }
  std::vector<Index> out;
  for (Index i = 0; i < mesh.num_nodes(); ++i)
    if (flag[i]) out.push_back(i);
  return out;
}

DenseModel build_dense_model(const Mesh& mesh, const RegionPredicate& omega, double nu,
                             const ScalarField& target) {
  DenseModel m;
  m.dim = mesh.dim();
  m.nu = nu;
  const Index n = mesh.num_nodes();
  m.num_nodes = n;
  m.boundary = boundary_by_facet_count(mesh);
  std::vector<char> on_boundary(n, 0);
  for (Index i : m.boundary) on_boundary[i] = 1;
  for (Index i = 0; i < n; ++i) {
    const bool in_omega = omega && omega(mesh.node(i));
    if (in_omega && on_boundary[i]) throw std::invalid_argument("constrained region touches the boundary");
    if (!on_boundary[i]) m.interior.push_back(i);
    if (in_omega) m.omega.push_back(i);
  }

  const Rule rule = m.dim == 2 ? triangle_rule() : tetrahedron_rule();
  const int npc = m.dim + 1;
  m.K = Matrix::Zero(n, n);
  m.M = Matrix::Zero(n, n);
  m.B = Matrix::Zero(n, n);
  m.target_load = Vector::Zero(n);
  for (const Cell& cell : mesh.cells()) {
    const LocalBasis basis = local_basis(mesh, cell);
    check_not_straddling(mesh, cell, target);
    for (int i = 0; i < npc; ++i)
      for (int j = 0; j < npc; ++j)
        m.K(cell[i], cell[j]) +=
            basis.volume * basis.coeff.col(i).tail(m.dim).dot(basis.coeff.col(j).tail(m.dim));
    for (std::size_t q = 0; q < rule.weight.size(); ++q) {
      const Point x = physical(mesh, cell, rule.bary[q]);
      const double w = rule.weight[q] * basis.volume;
      const double t = target(x);
      for (int i = 0; i < npc; ++i) {
        const double phi_i = basis.value(i, x);
        m.target_load[cell[i]] += w * t * phi_i;
        for (int j = 0; j < npc; ++j) m.M(cell[i], cell[j]) += w * phi_i * basis.value(j, x);
      }
    }
  }

  // Boundary facets: two-point Gauss on segments, interior three-point rule on triangles.
  std::vector<std::pair<std::array<double, 3>, double>> facet_rule;
  if (m.dim == 2) {
    const double g = 0.5 / std::sqrt(3.0);
    facet_rule = {{{0.5 - g, 0.5 + g, 0}, 0.5}, {{0.5 + g, 0.5 - g, 0}, 0.5}};
  } else {
    facet_rule = {{{2.0 / 3, 1.0 / 6, 1.0 / 6}, 1.0 / 3},
                  {{1.0 / 6, 2.0 / 3, 1.0 / 6}, 1.0 / 3},
                  {{1.0 / 6, 1.0 / 6, 2.0 / 3}, 1.0 / 3}};
  }
  for (const auto& [key, count] : count_facets(mesh)) {
    if (count != 1) continue;
    const double measure = facet_measure(mesh, key);
    for (const auto& [b, w] : facet_rule)
      for (int i = 0; i < m.dim; ++i)
        for (int j = 0; j < m.dim; ++j) m.B(key[i], key[j]) += measure * w * b[i] * b[j];
  }

  m.lumped = Vector::Zero(n);
  for (Index j : m.omega) m.lumped[j] = m.M.row(j).sum();
  m.target_nodal = m.M.ldlt().solve(m.target_load);

  const Index nb = static_cast<Index>(m.boundary.size());
  const Index ni = static_cast<Index>(m.interior.size());
  Matrix k_ii(ni, ni), k_ib(ni, nb);
  for (Index a = 0; a < ni; ++a) {
    for (Index b = 0; b < ni; ++b) k_ii(a, b) = m.K(m.interior[a], m.interior[b]);
    for (Index b = 0; b < nb; ++b) k_ib(a, b) = m.K(m.interior[a], m.boundary[b]);
  }
  const Matrix ext = -k_ii.ldlt().solve(k_ib);
  m.S = Matrix::Zero(n, nb);
  for (Index b = 0; b < nb; ++b) m.S(m.boundary[b], b) = 1.0;
  for (Index a = 0; a < ni; ++a) m.S.row(m.interior[a]) = ext.row(a);

  m.B_bb.resize(nb, nb);
  for (Index a = 0; a < nb; ++a)
    for (Index b = 0; b < nb; ++b) m.B_bb(a, b) = m.B(m.boundary[a], m.boundary[b]);
  m.A = m.S.transpose() * m.M * m.S + nu * m.B_bb;
  m.f = m.S.transpose() * (m.M * m.target_nodal);
  m.c = 0.5 * m.target_nodal.dot(m.M * m.target_nodal);
  return m;
}

double dense_objective(const Mesh& mesh, const DenseModel& model, const ScalarField& target,
                       const Vector& u) {
  const Vector y = model.S * u;
  const Rule rule = model.dim == 2 ? triangle_rule() : tetrahedron_rule();
  double misfit = 0.0;
  for (const Cell& cell : mesh.cells()) {
    const LocalBasis basis = local_basis(mesh, cell);
    check_not_straddling(mesh, cell, target);
    for (std::size_t q = 0; q < rule.weight.size(); ++q) {
      const Point x = physical(mesh, cell, rule.bary[q]);
      double yh = 0.0;
      for (int k = 0; k <= model.dim; ++k) yh += basis.value(k, x) * y[cell[k]];
      const double e = yh - target(x);
      misfit += rule.weight[q] * basis.volume * e * e;
    }
  }
  return 0.5 * misfit + 0.5 * model.nu * u.dot(model.B_bb * u);
}

DenseQp make_dense_qp(const DenseModel& model, const Vector& lower, const Vector& upper,
                      double gamma, const Vector& state_upper, const Vector& state_lower) {
  DenseQp qp;
  qp.A = model.A;
  qp.f = model.f;
  const Index nb = static_cast<Index>(model.boundary.size());
  qp.lower = lower.size() ? lower : Vector::Constant(nb, -kInf);
  qp.upper = upper.size() ? upper : Vector::Constant(nb, kInf);
  qp.gamma = gamma;
  const Index nw = gamma > 0 ? static_cast<Index>(model.omega.size()) : 0;
  qp.S_omega.resize(nw, nb);
  qp.weights.resize(nw);
  qp.state_upper = Vector::Constant(nw, kInf);
  qp.state_lower = Vector::Constant(nw, -kInf);
  qp.shift = Vector::Zero(nw);
  qp.lower_shift = Vector::Zero(nw);
  for (Index k = 0; k < nw; ++k) {
    const Index j = model.omega[k];
    qp.S_omega.row(k) = model.S.row(j);
    qp.weights[k] = model.lumped[j];
    if (state_upper.size()) qp.state_upper[k] = state_upper[j];
    if (state_lower.size()) qp.state_lower[k] = state_lower[j];
  }
  return qp;
}

namespace {

// Gradient of the penalty with respect to y at the constrained nodes.
Vector penalty_gradient(const DenseQp& qp, const Vector& y) {
  Vector g = Vector::Zero(y.size());
  for (Index j = 0; j < y.size(); ++j) {
    if (std::isfinite(qp.state_upper[j]))
      g[j] += qp.weights[j] * std::max(0.0, qp.shift[j] + qp.gamma * (y[j] - qp.state_upper[j]));
    if (std::isfinite(qp.state_lower[j]))
      g[j] -= qp.weights[j] * std::max(0.0, qp.lower_shift[j] + qp.gamma * (qp.state_lower[j] - y[j]));
  }
  return g;
}

Vector full_gradient(const DenseQp& qp, const Vector& u) {
  Vector g = qp.A * u - qp.f;
  if (qp.S_omega.rows() > 0) g += qp.S_omega.transpose() * penalty_gradient(qp, qp.S_omega * u);
  return g;
}

class CoordinateStep {
 public:
  CoordinateStep(const DenseQp& qp, const Vector& y, const Vector& g, Index i)
      : qp_(qp), y_(y), g_(g), i_(i) {}

  // Derivative of the objective along e_i at step t; nondecreasing in t.
  double derivative(double t) const {
    double d = g_[i_] + qp_.A(i_, i_) * t;
    for (Index j = 0; j < y_.size(); ++j) {
      const double s = qp_.S_omega(j, i_);
      if (s == 0.0) continue;
      const double yj = y_[j] + t * s;
      double p = 0.0;
      if (std::isfinite(qp_.state_upper[j]))
        p += std::max(0.0, qp_.shift[j] + qp_.gamma * (yj - qp_.state_upper[j]));
      if (std::isfinite(qp_.state_lower[j]))
        p -= std::max(0.0, qp_.lower_shift[j] + qp_.gamma * (qp_.state_lower[j] - yj));
      d += qp_.weights[j] * s * p;
    }
    return d;
  }

  // Exact minimizer over [lo, hi] of the convex piecewise quadratic.
  double minimize(double lo, double hi) const {
    if (std::isfinite(lo) && derivative(lo) >= 0) return lo;
    if (std::isfinite(hi) && derivative(hi) <= 0) return hi;
    std::vector<double> pts;
    for (Index j = 0; j < y_.size(); ++j) {
      const double s = qp_.S_omega(j, i_);
      if (s == 0.0) continue;
      if (std::isfinite(qp_.state_upper[j]))
        pts.push_back((qp_.state_upper[j] - y_[j] - qp_.shift[j] / qp_.gamma) / s);
      if (std::isfinite(qp_.state_lower[j]))
        pts.push_back((qp_.state_lower[j] - y_[j] + qp_.lower_shift[j] / qp_.gamma) / s);
    }
    std::erase_if(pts, [&](double p) { return !(p > lo && p < hi); });
    if (std::isfinite(lo)) pts.push_back(lo);
    if (std::isfinite(hi)) pts.push_back(hi);
    std::sort(pts.begin(), pts.end());
    if (pts.empty()) return root_on_line(0.0, 1.0);
    // First point with a nonnegative derivative.
    std::size_t a = 0, b = pts.size();
    while (a < b) {
      const std::size_t mid = (a + b) / 2;
      if (derivative(pts[mid]) >= 0) b = mid;
      else a = mid + 1;
    }
    if (a == 0) return root_on_line(pts[0] - 1.0, pts[0]);
    if (a == pts.size()) return root_on_line(pts.back(), pts.back() + 1.0);
    return root_on_line(pts[a - 1], pts[a]);
  }

 private:
  // Root of the derivative assuming it is affine between p and q.
  double root_on_line(double p, double q) const {
    const double dp = derivative(p), dq = derivative(q);
    if (dq == dp) return p;
    return p - dp * (q - p) / (dq - dp);
  }

  const DenseQp& qp_;
  const Vector& y_;
  const Vector& g_;
  Index i_;
};

// Exact solve with the box and state sets read off the iterate, then a KKT check.
DenseQpSolution polish(const DenseQp& qp, const Vector& u_cd) {
  const Index n = static_cast<Index>(qp.f.size());
  DenseQpSolution sol;
  std::vector<Index> fixed, free;
  Vector u = u_cd;
  for (Index i = 0; i < n; ++i) {
    if (u[i] >= qp.upper[i]) {
      sol.at_upper.push_back(i);
      fixed.push_back(i);
      u[i] = qp.upper[i];
    } else if (u[i] <= qp.lower[i]) {
      sol.at_lower.push_back(i);
      fixed.push_back(i);
      u[i] = qp.lower[i];
    } else {
      free.push_back(i);
    }
  }
  Matrix q = qp.A;
  Vector r = qp.f;
  if (qp.S_omega.rows() > 0) {
    const Vector y = qp.S_omega * u_cd;
    for (Index j = 0; j < y.size(); ++j) {
      const auto row = qp.S_omega.row(j);
      if (std::isfinite(qp.state_upper[j]) && qp.shift[j] + qp.gamma * (y[j] - qp.state_upper[j]) > 0) {
        q += qp.gamma * qp.weights[j] * row.transpose() * row;
        r += qp.weights[j] * (qp.gamma * qp.state_upper[j] - qp.shift[j]) * row.transpose();
      }
      if (std::isfinite(qp.state_lower[j]) &&
          qp.lower_shift[j] + qp.gamma * (qp.state_lower[j] - y[j]) > 0) {
        q += qp.gamma * qp.weights[j] * row.transpose() * row;
        r += qp.weights[j] * (qp.gamma * qp.state_lower[j] + qp.lower_shift[j]) * row.transpose();
      }
    }
  }
  if (!free.empty()) {
    const Index nf = static_cast<Index>(free.size());
    Matrix qff(nf, nf);
    Vector rf(nf);
    for (Index a = 0; a < nf; ++a) {
      rf[a] = r[free[a]];
      for (Index b = 0; b < nf; ++b) qff(a, b) = q(free[a], free[b]);
      for (Index k : fixed) rf[a] -= q(free[a], k) * u[k];
    }
    const Vector uf = qff.ldlt().solve(rf);
    for (Index a = 0; a < nf; ++a) u[free[a]] = uf[a];
  }

  const Vector grad = full_gradient(qp, u);
  const double scale = std::max({1.0, qp.f.lpNorm<Eigen::Infinity>(),
                                 (qp.A * u).lpNorm<Eigen::Infinity>()});
  const double tol = 1e-9 * scale;
  bool ok = true;
  sol.lambda = Vector::Zero(n);
  for (Index i : free) {
    const double span = 1e-12 * (1.0 + std::abs(u[i]));
    ok &= u[i] <= qp.upper[i] + span && u[i] >= qp.lower[i] - span;
    ok &= std::abs(grad[i]) <= tol;
  }
  for (Index i : sol.at_upper) {
    sol.lambda[i] = -grad[i];
    ok &= sol.lambda[i] >= -tol;
  }
  for (Index i : sol.at_lower) {
    sol.lambda[i] = -grad[i];
    ok &= sol.lambda[i] <= tol;
  }
  sol.u = u;
  sol.verified = ok && u.allFinite();
  if (qp.S_omega.rows() > 0) {
    const Vector y = qp.S_omega * u;
    for (Index j = 0; j < y.size(); ++j) {
      if (std::isfinite(qp.state_upper[j]) && qp.shift[j] + qp.gamma * (y[j] - qp.state_upper[j]) > 0)
        sol.state_upper_active.push_back(j);
      if (std::isfinite(qp.state_lower[j]) &&
          qp.lower_shift[j] + qp.gamma * (qp.state_lower[j] - y[j]) > 0)
        sol.state_lower_active.push_back(j);
    }
  }
  return sol;
}

}  // namespace

DenseQpSolution solve_dense_qp(const DenseQp& qp, long max_sweeps) {
  const Index n = static_cast<Index>(qp.f.size());
  Vector u = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) u[i] = std::clamp(0.0, qp.lower[i], qp.upper[i]);
  Vector g = qp.A * u - qp.f;
  Vector y = qp.S_omega * u;
  long sweeps = 0;
  for (long chunk = 10; sweeps < max_sweeps; chunk = std::min(2 * chunk, 20000L)) {
    for (long s = 0; s < chunk && sweeps < max_sweeps; ++s, ++sweeps) {
      for (Index i = 0; i < n; ++i) {
        const CoordinateStep step(qp, y, g, i);
        const double target = std::clamp(u[i] + step.minimize(qp.lower[i] - u[i], qp.upper[i] - u[i]),
                                         qp.lower[i], qp.upper[i]);
        const double t = target - u[i];
        if (t == 0.0) continue;
        u[i] = target;
        g += t * qp.A.col(i);
        if (y.size()) y += t * qp.S_omega.col(i);
      }
    }
    DenseQpSolution sol = polish(qp, u);
    sol.sweeps = sweeps;
    if (sol.verified) return sol;
  }
  DenseQpSolution sol = polish(qp, u);
  sol.sweeps = sweeps;
  return sol;
}

double dense_qp_value(const DenseQp& qp, const Vector& u) {
  double v = 0.5 * u.dot(qp.A * u) - qp.f.dot(u);
  if (qp.S_omega.rows() > 0) {
    const Vector y = qp.S_omega * u;
    for (Index j = 0; j < y.size(); ++j) {
      if (std::isfinite(qp.state_upper[j])) {
        const double p = std::max(0.0, qp.shift[j] + qp.gamma * (y[j] - qp.state_upper[j]));
        v += qp.weights[j] * p * p / (2 * qp.gamma);
      }
      if (std::isfinite(qp.state_lower[j])) {
        const double p = std::max(0.0, qp.lower_shift[j] + qp.gamma * (qp.state_lower[j] - y[j]));
        v += qp.weights[j] * p * p / (2 * qp.gamma);
      }
    }
  }
  return v;
}

}  // namespace dck::reference
