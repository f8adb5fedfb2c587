#include <doctest.h>

#include <cmath>
#include <random>

#include "dck/reference/dense.hpp"
#include "dck/solvers.hpp"

using namespace dck;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double max_abs(const Vector& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

struct Setup {
  std::shared_ptr<const Mesh> mesh;
  RegionPredicate omega;
  std::shared_ptr<DiscreteProblem> prob;
  reference::DenseModel dense;

  Setup(Mesh m, double nu, ScalarField target, RegionPredicate region = nullptr)
      : mesh(std::make_shared<Mesh>(std::move(m))), omega(std::move(region)) {
    prob = std::make_shared<DiscreteProblem>(mesh, omega, nu, target);
    dense = reference::build_dense_model(*mesh, omega, nu, target);
    REQUIRE(prob->sets().boundary == dense.boundary);
    REQUIRE(prob->sets().omega == dense.omega);
  }
  Index nodes() const { return mesh->num_nodes(); }
};

RegionPredicate constraint_ball() { return closed_ball({-0.1, -0.1, 0}, 0.2); }

ControlBounds upper_only(double beta) { return {ScalarField(), ScalarField::constant(beta)}; }

StateBound ball_bound(double b) {
  StateBound s;
  s.region = {{-0.1, -0.1, 0}, 0.2};
  s.upper = ScalarField::constant(b);
  return s;
}

// The residual test of PCG scales with the gamma-weighted right-hand side, so
// oracle comparisons at large gamma use a tighter inner tolerance.
SolverOptions tight() {
  SolverOptions o;
  o.pcg_rel_tol = 1e-12;
  return o;
}

void check_matches(const Vector& u, const Vector& u_ref, double tol = 1e-8) {
  CHECK(max_abs(u - u_ref) <= tol * std::max(1.0, max_abs(u_ref)));
}

}  // namespace

TEST_CASE("unconstrained cube value at n = 16") {
  const auto mesh = std::make_shared<Mesh>(build_cube_mesh(16));
  const DiscreteProblem prob(mesh, nullptr, 1.0, ScalarField::constant(1.0));
  const LevelResult r = solve_unconstrained(prob, UnconstrainedMethod::ReducedPcg);
  CHECK(r.converged);
  CHECK(prob.evaluate_J(r.u) == doctest::Approx(0.4142332683).epsilon(1e-6));
  CHECK(r.pcg >= 4);
  CHECK(r.pcg <= 8);
  CHECK(max_abs(prob.apply_A(r.u) - prob.f()) <= 1e-10 * prob.f().norm());
}

TEST_CASE("zero target gives the zero control") {
  const DiscreteProblem prob(std::make_shared<Mesh>(build_pentagon_mesh(8)), nullptr, 1.0, ScalarField::zero());
  for (auto method : {UnconstrainedMethod::ReducedPcg, UnconstrainedMethod::KktDirect}) {
    const LevelResult r = solve_unconstrained(prob, method);
    CHECK(max_abs(r.u) == 0.0);
    CHECK(prob.evaluate_J(r.u) == 0.0);
  }
}

TEST_CASE("reduced PCG and the assembled system agree") {
  for (double nu : {1.0, 0.0}) {
    const DiscreteProblem prob(std::make_shared<Mesh>(build_pentagon_mesh(8)), nullptr, nu,
                               ScalarField::squared_norm());
    const LevelResult a = solve_unconstrained(prob, UnconstrainedMethod::ReducedPcg);
    const LevelResult b = solve_unconstrained(prob, UnconstrainedMethod::KktDirect);
    check_matches(a.u, b.u);
  }
}

TEST_CASE("unconstrained solves match the dense oracle") {
  std::vector<Setup> setups;
  setups.emplace_back(build_pentagon_mesh(8), 1.0, ScalarField::constant(1.0));
  setups.emplace_back(build_pentagon_mesh(8), 0.0, ScalarField::squared_norm());
  setups.emplace_back(build_cube_mesh(4), 1.0, ScalarField::constant(1.0));
  for (const Setup& s : setups) {
    const reference::DenseQpSolution ref =
        reference::solve_dense_qp(reference::make_dense_qp(s.dense, {}, {}));
    REQUIRE(ref.verified);
    const LevelResult r = solve_unconstrained(*s.prob, UnconstrainedMethod::ReducedPcg);
    check_matches(r.u, ref.u);
    CHECK(s.prob->evaluate_J(r.u) ==
          doctest::Approx(reference::dense_objective(*s.mesh, s.dense, s.prob->target(), ref.u)).epsilon(1e-8));
  }
}

TEST_CASE("control active sets") {
  BoxBounds box{Vector::Constant(3, -1.0), Vector::Constant(3, 1.0)};
  const ActiveSets inside = control_active_sets(Vector::Zero(3), Vector::Zero(3), box, 1.0);
  CHECK(inside.upper.empty());
  CHECK(inside.lower.empty());
  CHECK(inside.free(3) == std::vector<Index>{0, 1, 2});

  for (double c : {1e-3, 1.0, 1e3}) {
    Vector u = Vector::Zero(3), lambda = Vector::Zero(3);
    u[1] = 1.0;
    lambda[1] = 1.0;
    u[2] = -1.0;
    lambda[2] = -1.0;
    const ActiveSets s = control_active_sets(u, lambda, box, c);
    CHECK(s.upper == std::vector<Index>{1});
    CHECK(s.lower == std::vector<Index>{2});
    CHECK(s.free(3) == std::vector<Index>{0});
  }

  // Ties go to the free set.
  Vector u(1), lambda(1);
  u[0] = 1.0;
  lambda[0] = 0.0;
  BoxBounds one{Vector::Constant(1, -1.0), Vector::Constant(1, 1.0)};
  CHECK(control_active_sets(u, lambda, one, 1.0).upper.empty());

  // With lower < upper no node can test active for both bounds.
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> dist(-3, 3);
  Vector ur(200), lr(200);
  for (int i = 0; i < 200; ++i) {
    ur[i] = dist(rng);
    lr[i] = dist(rng);
  }
  BoxBounds wide{Vector::Constant(200, -1.0), Vector::Constant(200, 1.0)};
  CHECK(control_active_sets(ur, lr, wide, 0.7).overlaps == 0);
}

TEST_CASE("boundary-mass weighted projection differs from pointwise clipping") {
  // Gamma = [-1, 1] with nodes -1, 0, 1; the optimality condition of
  // min 1/2 |u - w|_B^2 over u <= 0 is the variational inequality with B.
  Eigen::Matrix3d b;
  b << 2, 1, 0, 1, 4, 1, 0, 1, 2;
  b /= 6.0;
  const Eigen::Vector3d w(-2, 1, 1);
  reference::DenseQp qp;
  qp.A = b;
  qp.f = b * w;
  qp.lower = Vector::Constant(3, -kInf);
  qp.upper = Vector::Zero(3);
  const reference::DenseQpSolution sol = reference::solve_dense_qp(qp);
  REQUIRE(sol.verified);
  CHECK(max_abs(sol.u - Eigen::Vector3d(-1.5, 0, 0)) < 1e-14);

  const BoxBounds box{Vector::Constant(3, -kInf), Vector::Zero(3)};
  const ActiveSets pointwise = control_active_sets(w, Vector::Zero(3), box, 1.0);
  CHECK(pointwise.upper == std::vector<Index>{1, 2});
  CHECK(pointwise.free(3) == std::vector<Index>{0});
  const Eigen::Vector3d clipped = w.cwiseMin(0.0);
  CHECK(max_abs(clipped - Eigen::Vector3d(-2, 0, 0)) == 0.0);
  CHECK(max_abs(clipped - sol.u) == doctest::Approx(0.5));
}

TEST_CASE("control-constrained solves match the dense oracle") {
  struct Case {
    Mesh mesh;
    double nu;
    ScalarField target;
    ControlBounds bounds;
  };
  std::vector<Case> cases;
  cases.push_back({build_pentagon_mesh(8), 1.0, ScalarField::constant(1.0), upper_only(0.16)});
  cases.push_back({build_pentagon_mesh(8), 0.0, ScalarField::split(0, 0.25, -1.0, 1.0),
                   {ScalarField::constant(-1.2), ScalarField::constant(0.16)}});
  cases.push_back({build_pentagon_mesh(8), 0.01, ScalarField::squared_norm(),
                   {ScalarField::constant(0.05), ScalarField()}});
  cases.push_back({build_cube_mesh(4), 1.0, ScalarField::constant(1.0), upper_only(0.16)});
  for (Case& c : cases) {
    const Setup s(std::move(c.mesh), c.nu, c.target);
    const BoxBounds box = box_bounds(*s.prob, c.bounds);
    const reference::DenseQpSolution ref =
        reference::solve_dense_qp(reference::make_dense_qp(s.dense, box.lower, box.upper));
    REQUIRE(ref.verified);
    const LevelResult r = solve_control_constrained(*s.prob, box);
    REQUIRE(r.converged);
    check_matches(r.u, ref.u);
    check_matches(r.lambda, ref.lambda);
    CHECK(r.sets.upper == ref.at_upper);
    CHECK(r.sets.lower == ref.at_lower);
    CHECK(r.newton <= 10);

    // Complementarity holds by construction.
    for (Index k : r.sets.upper) {
      CHECK(r.u[k] == box.upper[k]);
      CHECK(r.lambda[k] >= 0.0);
    }
    for (Index k : r.sets.lower) {
      CHECK(r.u[k] == box.lower[k]);
      CHECK(r.lambda[k] <= 0.0);
    }
    for (Index k : r.sets.free(s.prob->num_boundary())) CHECK(r.lambda[k] == 0.0);

    // One more Newton step from the returned pair changes nothing.
    const LevelResult again = solve_control_constrained(*s.prob, box, &r.u, &r.lambda);
    CHECK(again.newton == 1);
    CHECK(again.sets.upper == r.sets.upper);
    CHECK(again.sets.lower == r.sets.lower);
    check_matches(again.u, r.u, 1e-10);
  }
}

TEST_CASE("inactive bounds reduce to one unconstrained step") {
  const DiscreteProblem prob(std::make_shared<Mesh>(build_pentagon_mesh(8)), nullptr, 1.0,
                             ScalarField::constant(1.0));
  const BoxBounds box = box_bounds(prob, {ScalarField::constant(-10.0), ScalarField::constant(10.0)});
  const LevelResult r = solve_control_constrained(prob, box);
  const LevelResult plain = solve_unconstrained(prob, UnconstrainedMethod::ReducedPcg);
  CHECK(r.newton == 1);
  CHECK(r.sets.upper.empty());
  CHECK(r.sets.lower.empty());
  check_matches(r.u, plain.u, 1e-12);
}

TEST_CASE("state active set") {
  const auto mesh = std::make_shared<Mesh>(build_pentagon_mesh(16));
  const IndexSets sets = classify_indices(*mesh, constraint_ball());
  REQUIRE(sets.omega.size() > 2);
  const FieldVector zero = FieldVector::Zero(mesh->num_nodes());
  const FieldVector bound = FieldVector::Constant(mesh->num_nodes(), 0.15);
  CHECK(state_active_set(zero, 1e3, zero, bound, sets).empty());

  FieldVector y = zero;
  y[sets.omega[1]] = 0.2;
  y[sets.omega[2]] = 0.15;
  for (double gamma : {1.0, 1e3, 1e9}) CHECK(state_active_set(y, gamma, zero, bound, sets) == std::vector<Index>{sets.omega[1]});

  const DiscreteProblem prob(mesh, constraint_ball(), 1.0, ScalarField::constant(1.0));
  const FieldVector h = penalty_diagonal(prob, state_active_set(y, 10.0, zero, bound, sets));
  Index nonzeros = 0;
  for (Index j = 0; j < h.size(); ++j) nonzeros += h[j] != 0.0;
  CHECK(nonzeros == 1);
  CHECK(h[sets.omega[1]] == prob.fem().lumped_omega[sets.omega[1]]);
}

TEST_CASE("penalized solves match the dense oracle") {
  const Setup s(build_pentagon_mesh(8), 1.0, ScalarField::constant(1.0), constraint_ball());
  const StateData state = state_data(*s.prob, ball_bound(0.15));
  const FieldVector b = FieldVector::Constant(s.nodes(), 0.15);
  for (double gamma : {10.0, 1e3, 1e5}) {
    const reference::DenseQpSolution ref =
        reference::solve_dense_qp(reference::make_dense_qp(s.dense, {}, {}, gamma, b));
    REQUIRE(ref.verified);
    const LevelResult r = solve_penalized(*s.prob, state, gamma, nullptr, tight());
    REQUIRE(r.converged);
    CHECK(!r.sets.omega_upper.empty());
    check_matches(r.u, ref.u);
    CHECK(r.sets.omega_upper.size() == ref.state_upper_active.size());
  }

  // A lower state bound pulling the state up inside the ball.
  StateBound both = ball_bound(0.6);
  both.lower = ScalarField::constant(0.45);
  const StateData two_sided = state_data(*s.prob, both);
  const reference::DenseQpSolution ref = reference::solve_dense_qp(reference::make_dense_qp(
      s.dense, {}, {}, 1e3, FieldVector::Constant(s.nodes(), 0.6), FieldVector::Constant(s.nodes(), 0.45)));
  REQUIRE(ref.verified);
  REQUIRE(!ref.state_lower_active.empty());
  const LevelResult r = solve_penalized(*s.prob, two_sided, 1e3, nullptr, tight());
  REQUIRE(r.converged);
  check_matches(r.u, ref.u);
  CHECK(r.sets.omega_lower.size() == ref.state_lower_active.size());
}

TEST_CASE("a bound that never binds leaves the unconstrained solution") {
  const DiscreteProblem prob(std::make_shared<Mesh>(build_pentagon_mesh(16)), constraint_ball(), 1.0,
                             ScalarField::constant(1.0));
  const StateData state = state_data(prob, ball_bound(1e6));
  const LevelResult r = solve_penalized(prob, state, 1e9);
  const LevelResult plain = solve_unconstrained(prob, UnconstrainedMethod::ReducedPcg);
  CHECK(r.newton == 1);
  CHECK(r.sets.omega_upper.empty());
  check_matches(r.u, plain.u, 1e-12);
  CHECK(recover_multiplier(prob, state, r.y, 1e9).empty());
}

TEST_CASE("combined solves match the dense oracle") {
  const Setup s(build_pentagon_mesh(8), 1.0, ScalarField::constant(1.0), constraint_ball());
  const StateData state = state_data(*s.prob, ball_bound(0.15));
  const BoxBounds box = box_bounds(*s.prob, upper_only(0.16));
  for (double gamma : {10.0, 1e3, 1e5}) {
    const reference::DenseQpSolution ref = reference::solve_dense_qp(reference::make_dense_qp(
        s.dense, box.lower, box.upper, gamma, FieldVector::Constant(s.nodes(), 0.15)));
    REQUIRE(ref.verified);
    const LevelResult r = solve_penalized_box(*s.prob, box, state, gamma, nullptr, tight());
    REQUIRE(r.converged);
    CHECK(!r.sets.upper.empty());
    check_matches(r.u, ref.u);
    check_matches(r.lambda, ref.lambda);
    CHECK(r.sets.upper == ref.at_upper);
  }
}

TEST_CASE("inactive control bounds leave the penalized solution") {
  const DiscreteProblem prob(std::make_shared<Mesh>(build_pentagon_mesh(16)), constraint_ball(), 1.0,
                             ScalarField::constant(1.0));
  const StateData state = state_data(prob, ball_bound(0.15));
  const BoxBounds box = box_bounds(prob, upper_only(100.0));
  const LevelResult a = solve_penalized(prob, state, 1e4);
  const LevelResult b = solve_penalized_box(prob, box, state, 1e4);
  CHECK(b.sets.upper.empty());
  check_matches(a.u, b.u, 1e-10);
}

TEST_CASE("every solver runs with nu = 0") {
  const DiscreteProblem prob(std::make_shared<Mesh>(build_pentagon_mesh(16)), constraint_ball(), 0.0,
                             ScalarField::constant(1.0));
  const StateData state = state_data(prob, ball_bound(0.15));
  const BoxBounds box = box_bounds(prob, upper_only(0.16));
  CHECK(solve_unconstrained(prob, UnconstrainedMethod::ReducedPcg).converged);
  CHECK(solve_unconstrained(prob, UnconstrainedMethod::KktDirect).converged);
  CHECK(solve_control_constrained(prob, box).converged);
  CHECK(solve_penalized(prob, state, 1e3).converged);
  CHECK(solve_penalized_box(prob, box, state, 1e3).converged);
}

TEST_CASE("larger penalties reduce the violation and raise the objective") {
  const DiscreteProblem prob(std::make_shared<Mesh>(build_pentagon_mesh(32)), constraint_ball(), 1.0,
                             ScalarField::constant(1.0));
  const StateData state = state_data(prob, ball_bound(0.15));
  double last_mcv = kInf, last_j = -kInf;
  BoundaryVector u = BoundaryVector::Zero(prob.num_boundary());
  for (double gamma = 1.0; gamma <= 1e7; gamma *= 10) {
    const LevelResult r = solve_penalized(prob, state, gamma, &u);
    REQUIRE(r.converged);
    const double mcv = max_constraint_violation(prob, state, r.y);
    const double j = prob.evaluate_J(r.u);
    CHECK(mcv <= last_mcv + 1e-12);
    CHECK(j >= last_j - 1e-12);
    last_mcv = mcv;
    last_j = j;
    u = r.u;
  }
}

TEST_CASE("recovered multiplier mass settles as the penalty grows") {
  const DiscreteProblem prob(std::make_shared<Mesh>(build_pentagon_mesh(64)), constraint_ball(), 1.0,
                             ScalarField::constant(1.0));
  const StateData state = state_data(prob, ball_bound(0.15));
  BoundaryVector u = BoundaryVector::Zero(prob.num_boundary());
  std::vector<double> totals;
  for (double gamma : {1e6, 1e7, 1e8, 1e9}) {
    const LevelResult r = solve_penalized(prob, state, gamma, &u);
    REQUIRE(r.converged);
    double total = 0;
    const auto weights = recover_multiplier(prob, state, r.y, gamma);
    CHECK(weights.size() == r.sets.omega_upper.size());
    for (const auto& w : weights) {
      CHECK(w.weight > 0.0);
      total += w.weight;
    }
    totals.push_back(total);
    u = r.u;
  }
  for (std::size_t k = 1; k < totals.size(); ++k)
    CHECK(std::abs(totals[k] - totals[k - 1]) <= 0.1 * totals[k - 1]);
}

TEST_CASE("continuation with a bound that never binds stops at the first check") {
  ProblemSpec spec;
  spec.level_min = spec.level_max = 4;
  spec.state = ball_bound(1e6);
  ProblemLadder ladder(spec);
  const SolverReport rep = solve_state_constrained(ladder);
  REQUIRE(rep.converged);
  CHECK(rep.rows.size() == 1);
  const LevelResult plain = solve_unconstrained(*rep.problem, UnconstrainedMethod::ReducedPcg);
  check_matches(rep.u, plain.u, 1e-12);
}

TEST_CASE("combined continuation with inactive control bounds follows the state-only path") {
  ProblemSpec spec;
  spec.level_min = 2;
  spec.level_max = 5;
  spec.state = ball_bound(0.15);
  spec.continuation.gamma_max = 1e6;
  ProblemLadder a(spec);
  const SolverReport state_only = solve_state_constrained(a);
  spec.control = upper_only(100.0);
  ProblemLadder b(spec);
  const SolverReport combined = solve_control_state(b);
  REQUIRE(state_only.converged);
  REQUIRE(combined.converged);
  REQUIRE(state_only.rows.size() == combined.rows.size());
  for (std::size_t k = 0; k < state_only.rows.size(); ++k) {
    CHECK(state_only.rows[k].level == combined.rows[k].level);
    CHECK(state_only.rows[k].gamma == combined.rows[k].gamma);
    CHECK(state_only.rows[k].num_active_omega == combined.rows[k].num_active_omega);
    CHECK(state_only.rows[k].J == doctest::Approx(combined.rows[k].J).epsilon(1e-10));
  }
}

TEST_CASE("continuation shrinks the multiplier residual and the violation") {
  ProblemSpec spec;
  spec.level_min = 2;
  spec.level_max = 6;
  spec.state = ball_bound(0.15);
  spec.continuation.gamma_max = 1e6;
  ProblemLadder ladder(spec);
  const SolverReport rep = solve_ladder(ladder);
  REQUIRE(rep.converged);
  REQUIRE(rep.rows.size() >= 5);
  for (std::size_t k = 1; k < rep.rows.size(); ++k) {
    CHECK(rep.rows[k].gamma == doctest::Approx(std::min(1e6, rep.rows[k - 1].gamma * 10)));
    CHECK(rep.rows[k].level >= rep.rows[k - 1].level);
  }
  CHECK(rep.rows.back().level == 6);
  CHECK(rep.rows.back().gamma == 1e6);
  CHECK(rep.rows.back().mcv < rep.rows.front().mcv);
}
