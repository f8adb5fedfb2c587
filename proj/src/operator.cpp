#include "dck/operator.hpp"

namespace dck {

DiscreteProblem::DiscreteProblem(std::shared_ptr<const Mesh> mesh, const RegionPredicate& omega,
                                 double nu, ScalarField target)
    : mesh_(std::move(mesh)), nu_(nu), target_(std::move(target)) {
  sets_ = classify_indices(*mesh_, omega);
  fem_ = assemble(*mesh_, sets_);
  setup();
}

DiscreteProblem::DiscreteProblem(std::shared_ptr<const Mesh> mesh, IndexSets sets, FemMatrices fem,
                                 double nu, ScalarField target)
    : mesh_(std::move(mesh)), sets_(std::move(sets)), fem_(std::move(fem)), nu_(nu),
      target_(std::move(target)) {
  setup();
}

void DiscreteProblem::setup() {
  if (!(nu_ >= 0.0)) throw std::invalid_argument("Tikhonov parameter must be nonnegative");
  if (!target_) target_ = ScalarField::zero();
  if (sets_.num_interior() == 0) throw std::invalid_argument("mesh has no interior nodes");
  k_ii_ = submatrix(fem_.stiffness, sets_.interior, sets_.interior);
  k_ib_ = submatrix(fem_.stiffness, sets_.interior, sets_.boundary);
  k_bi_ = submatrix(fem_.stiffness, sets_.boundary, sets_.interior);
  m_bb_ = submatrix(fem_.mass, sets_.boundary, sets_.boundary);
  b_bb_ = submatrix(fem_.boundary_mass, sets_.boundary, sets_.boundary);
  p_bb_ = m_bb_ + nu_ * b_bb_;
  k_ii_factor_ = spd_factorize(k_ii_);
  b_bb_factor_ = spd_factorize(b_bb_);
  p_factor_ = spd_factorize(p_bb_);

  target_nodal_ = project_target(*mesh_, fem_, target_);
  const FieldVector my = fem_.mass * target_nodal_;
  f_ = apply_St(my);
  c_const_ = 0.5 * target_nodal_.dot(my);
}

FieldVector DiscreteProblem::boundary_to_field(const BoundaryVector& u) const {
  if (u.size() != sets_.num_boundary()) throw std::invalid_argument("boundary vector length mismatch");
  FieldVector y = FieldVector::Zero(sets_.num_nodes());
  for (Index k = 0; k < sets_.num_boundary(); ++k) y[sets_.boundary[k]] = u[k];
  return y;
}

FieldVector DiscreteProblem::apply_S(const BoundaryVector& u) const {
  FieldVector y = boundary_to_field(u);
  const Vector yi = k_ii_factor_.solve(Vector(-(k_ib_ * u)));
  for (Index k = 0; k < sets_.num_interior(); ++k) y[sets_.interior[k]] = yi[k];
  return y;
}

BoundaryVector DiscreteProblem::apply_St(const FieldVector& load) const {
  const Vector phi = k_ii_factor_.solve(gather(load, sets_.interior));
  return gather(load, sets_.boundary) - k_bi_ * phi;
}

Vector DiscreteProblem::adjoint_state(const FieldVector& y, const FieldVector* extra) const {
  FieldVector load = fem_.mass * y;
  if (extra) load += *extra;
  return k_ii_factor_.solve(gather(load, sets_.interior));
}

BoundaryVector DiscreteProblem::normal_derivative(const FieldVector& y, const FieldVector* extra) const {
  FieldVector load = fem_.mass * y;
  if (extra) load += *extra;
  return b_bb_factor_.solve(apply_St(load));
}

BoundaryVector DiscreteProblem::apply_A(const BoundaryVector& u) const {
  const FieldVector y = apply_S(u);
  return apply_St(fem_.mass * y) + nu_ * (b_bb_ * u);
}

LinearOperator DiscreteProblem::reduced_operator() const {
  return {num_boundary(), [this](const Vector& u) { return apply_A(u); }};
}

double DiscreteProblem::evaluate_J(const BoundaryVector& u) const {
  const FieldVector y = apply_S(u);
  return 0.5 * squared_l2_error(*mesh_, y, target_) + 0.5 * nu_ * u.dot(b_bb_ * u);
}

double DiscreteProblem::quadratic_J(const BoundaryVector& u) const {
  return 0.5 * u.dot(apply_A(u)) - f_.dot(u) + c_const_;
}

double DiscreteProblem::projected_J(const BoundaryVector& u) const {
  const FieldVector e = apply_S(u) - target_nodal_;
  return 0.5 * e.dot(fem_.mass * e) + 0.5 * nu_ * u.dot(b_bb_ * u);
}

BoundaryVector PenalizedOperator::apply(const BoundaryVector& u) const {
  const FieldVector y = base->apply_S(u);
  FieldVector load = base->fem().mass * y;
  if (gamma != 0.0 && h.size() > 0) load += gamma * h.cwiseProduct(y);
  return base->apply_St(load) + base->nu() * (base->boundary_mass_bb() * u);
}

LinearOperator PenalizedOperator::as_operator() const {
  return {base->num_boundary(), [this](const Vector& u) { return apply(u); }};
}

BoundaryVector PenalizedOperator::rhs(const FieldVector& shift, const FieldVector& bound) const {
  // Merged load: M y_target + H(gamma b - mu), then a single S'.
  FieldVector load = base->fem().mass * base->target_nodal();
  if (h.size() > 0) load += h.cwiseProduct(gamma * bound - shift);
  return base->apply_St(load);
}

BoundaryVector PenalizedOperator::rhs_with_load(const FieldVector& load) const {
  return base->apply_St(base->fem().mass * base->target_nodal() + load);
}

FieldVector penalty_diagonal(const DiscreteProblem& prob, const std::vector<Index>& active) {
  FieldVector h = FieldVector::Zero(prob.sets().num_nodes());
  for (Index j : active) h[j] = prob.fem().lumped_omega[j];
  return h;
}

KktSystem assemble_kkt(const DiscreteProblem& prob, const FixedControls* fixed,
                       const PenaltyLinearization* penalty) {
  const IndexSets& s = prob.sets();
  const FemMatrices& fem = prob.fem();
  KktSystem sys;
  sys.num_state = s.num_nodes();
  sys.num_adjoint = s.num_interior();
  sys.num_fixed = fixed ? static_cast<Index>(fixed->positions.size()) : 0;
  const Index n = sys.num_state + sys.num_adjoint + sys.num_fixed;

  SparseMatrix top_left = fem.mass + prob.nu() * fem.boundary_mass;
  if (penalty) {
    SparseMatrix hmat(sys.num_state, sys.num_state);
    std::vector<Triplet> ht;
    for (Index j = 0; j < sys.num_state; ++j)
      if (penalty->h[j] != 0.0) ht.emplace_back(j, j, penalty->gamma * penalty->h[j]);
    hmat.setFromTriplets(ht.begin(), ht.end());
    top_left += hmat;
  }
  std::vector<Triplet> t;
  for (Index c = 0; c < top_left.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(top_left, c); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (Index k = 0; k < s.num_interior(); ++k) {
    const Index col = s.interior[k];
    for (SparseMatrix::InnerIterator it(fem.stiffness, col); it; ++it) {
      t.emplace_back(it.row(), sys.num_state + k, -it.value());
      t.emplace_back(sys.num_state + k, it.row(), -it.value());
    }
  }
  sys.rhs = Vector::Zero(n);
  sys.rhs.head(sys.num_state) = fem.mass * prob.target_nodal();
  if (penalty) sys.rhs.head(sys.num_state) += penalty->load;
  for (Index a = 0; a < sys.num_fixed; ++a) {
    const Index node = s.boundary[fixed->positions[a]];
    const Index row = sys.num_state + sys.num_adjoint + a;
    t.emplace_back(node, row, 1.0);
    t.emplace_back(row, node, 1.0);
    sys.rhs[row] = fixed->values[a];
    sys.fixed_nodes.push_back(node);
  }
  sys.matrix.resize(n, n);
  sys.matrix.setFromTriplets(t.begin(), t.end());
  return sys;
}

KktSolution solve_kkt(const DiscreteProblem& prob, const KktSystem& system) {
  const Vector x = solve_sparse_lu(system.matrix, system.rhs);
  if ((system.matrix * x - system.rhs).norm() > 1e-10 * std::max(system.rhs.norm(), 1e-300))
    throw SingularSystemError("KKT solve residual above tolerance");
  KktSolution sol;
  sol.y = x.head(system.num_state);
  sol.phi_interior = x.segment(system.num_state, system.num_adjoint);
  sol.lambda_fixed = x.tail(system.num_fixed);
  // The constraint rows pin these values; drop the round-off of the solve.
  for (Index a = 0; a < system.num_fixed; ++a)
    sol.y[system.fixed_nodes[a]] = system.rhs[system.num_state + system.num_adjoint + a];
  sol.u = gather(sol.y, prob.sets().boundary);
  return sol;
}

}  // namespace dck
