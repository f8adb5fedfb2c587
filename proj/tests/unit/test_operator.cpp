#include <doctest.h>

#include <random>

#include "dck/operator.hpp"
#include "dck/reference/dense.hpp"

using namespace dck;
using reference::Matrix;

namespace {

std::shared_ptr<const Mesh> pentagon(int n) { return std::make_shared<Mesh>(build_pentagon_mesh(n)); }
std::shared_ptr<const Mesh> cube(int n) { return std::make_shared<Mesh>(build_cube_mesh(n)); }

Vector random_vector(Index n, std::mt19937& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

// Dense S, A, f are indexed by the reference's own boundary ordering; both sort
// node indices, so the orderings coincide and this is checked here.
void require_same_partition(const DiscreteProblem& prob, const reference::DenseModel& dense) {
  REQUIRE(prob.sets().boundary == dense.boundary);
  REQUIRE(prob.sets().interior == dense.interior);
}

double max_abs(const Vector& v) { return v.lpNorm<Eigen::Infinity>(); }

}  // namespace

TEST_CASE("harmonic extension of constants and linears") {
  for (auto mesh : {pentagon(4), cube(2)}) {
    const DiscreteProblem prob(mesh, nullptr, 1.0, ScalarField::constant(1.0));
    const FieldVector y = prob.apply_S(Vector::Constant(prob.num_boundary(), 2.5));
    CHECK(max_abs(y.array() - 2.5) < 1e-13);

    BoundaryVector trace(prob.num_boundary());
    for (Index k = 0; k < prob.num_boundary(); ++k) trace[k] = mesh->node(prob.sets().boundary[k])[0];
    const FieldVector lin = prob.apply_S(trace);
    for (Index i = 0; i < mesh->num_nodes(); ++i) CHECK(lin[i] == doctest::Approx(mesh->node(i)[0]).epsilon(1e-12));
  }
}

TEST_CASE("operators match the dense reference") {
  std::mt19937 rng(7);
  struct Case {
    std::shared_ptr<const Mesh> mesh;
    double nu;
    ScalarField target;
  };
  const std::vector<Case> cases{{pentagon(4), 1.0, ScalarField::constant(1.0)},
                                {pentagon(4), 0.0, ScalarField::squared_norm()},
                                {cube(2), 1.0, ScalarField::constant(1.0)},
                                {cube(3), 0.5, ScalarField::linear({1, 2, 0}, 0.5)}};
  for (const Case& c : cases) {
    const DiscreteProblem prob(c.mesh, closed_ball({0, 0, 0}, 0.3), c.nu, c.target);
    const reference::DenseModel dense = reference::build_dense_model(*c.mesh, closed_ball({0, 0, 0}, 0.3), c.nu, c.target);
    require_same_partition(prob, dense);
    const double a_scale = dense.A.lpNorm<Eigen::Infinity>();

    CHECK(max_abs(prob.f() - dense.f) <= 1e-12 * std::max(1.0, max_abs(dense.f)));
    CHECK(prob.c_const() == doctest::Approx(dense.c).epsilon(1e-12));
    CHECK(max_abs(prob.target_nodal() - dense.target_nodal) < 1e-11);

    for (int probe = 0; probe < 5; ++probe) {
      const Vector u = random_vector(prob.num_boundary(), rng);
      CHECK(max_abs(prob.apply_S(u) - dense.S * u) < 1e-12);
      CHECK(max_abs(prob.apply_A(u) - dense.A * u) <= 1e-12 * a_scale * max_abs(u));

      const FieldVector y = random_vector(c.mesh->num_nodes(), rng);
      const Vector w_dense = dense.B_bb.ldlt().solve(dense.S.transpose() * dense.M * y);
      CHECK(max_abs(prob.normal_derivative(y) - w_dense) <= 1e-10 * std::max(1.0, max_abs(w_dense)));
    }
  }
}

TEST_CASE("zero data gives zero normal derivative and zero f") {
  const DiscreteProblem prob(pentagon(4), nullptr, 1.0, ScalarField::zero());
  CHECK(max_abs(prob.normal_derivative(FieldVector::Zero(prob.mesh().num_nodes()))) == 0.0);
  CHECK(max_abs(prob.f()) == 0.0);
}

TEST_CASE("adjoint identity on random probes") {
  // Both inner products use independently assembled dense matrices, so the
  // identity also checks the assembled K, M and B.
  std::mt19937 rng(11);
  for (auto mesh : {pentagon(4), pentagon(8), cube(2), cube(4)}) {
    const DiscreteProblem prob(mesh, nullptr, 1.0, ScalarField::constant(1.0));
    const reference::DenseModel dense = reference::build_dense_model(*mesh, nullptr, 1.0, ScalarField::constant(1.0));
    require_same_partition(prob, dense);
    double worst = 0.0;
    for (int probe = 0; probe < 50; ++probe) {
      const Vector u = random_vector(prob.num_boundary(), rng);
      const FieldVector y = random_vector(mesh->num_nodes(), rng);
      const FieldVector su = prob.apply_S(u);
      const double lhs = su.dot(dense.M * y);
      const double rhs = u.dot(dense.B_bb * prob.normal_derivative(y));
      const double scale = std::sqrt(su.dot(dense.M * su) * y.dot(dense.M * y));
      worst = std::max(worst, std::abs(lhs - rhs) / scale);
    }
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("reduced operator is symmetric and positive definite, also for nu = 0") {
  std::mt19937 rng(3);
  for (double nu : {1.0, 0.0}) {
    const DiscreteProblem prob(pentagon(8), nullptr, nu, ScalarField::constant(1.0));
    for (int probe = 0; probe < 20; ++probe) {
      const Vector u = random_vector(prob.num_boundary(), rng);
      const Vector v = random_vector(prob.num_boundary(), rng);
      const Vector au = prob.apply_A(u), av = prob.apply_A(v);
      CHECK(std::abs(v.dot(au) - u.dot(av)) <= 1e-12 * au.norm() * v.norm());
      CHECK(u.dot(au) > 0.0);
    }
  }
}

TEST_CASE("objective evaluated three ways") {
  std::mt19937 rng(5);
  const DiscreteProblem constant_target(pentagon(8), nullptr, 0.7, ScalarField::constant(1.0));
  const DiscreteProblem smooth_target(pentagon(8), nullptr, 0.7, ScalarField::squared_norm());
  for (int probe = 0; probe < 10; ++probe) {
    const Vector u = random_vector(constant_target.num_boundary(), rng);
    const double q = constant_target.quadratic_J(u);
    CHECK(std::abs(constant_target.evaluate_J(u) - q) <= 1e-10 * std::abs(q));
    CHECK(std::abs(constant_target.projected_J(u) - q) <= 1e-10 * std::abs(q));
    const double qs = smooth_target.quadratic_J(u);
    CHECK(std::abs(smooth_target.projected_J(u) - qs) <= 1e-10 * std::abs(qs));
  }
  const DiscreteProblem pent(pentagon(4), nullptr, 1.0, ScalarField::constant(1.0));
  CHECK(pent.evaluate_J(Vector::Zero(pent.num_boundary())) == doctest::Approx(0.4375).epsilon(1e-14));
  const DiscreteProblem box(cube(2), nullptr, 1.0, ScalarField::constant(1.0));
  CHECK(box.evaluate_J(Vector::Zero(box.num_boundary())) == doctest::Approx(0.5).epsilon(1e-14));
  const DiscreteProblem exact(pentagon(4), nullptr, 0.0, ScalarField::constant(1.0));
  CHECK(std::abs(exact.evaluate_J(Vector::Ones(exact.num_boundary()))) < 1e-28);
}

TEST_CASE("objective matches the dense quadrature") {
  std::mt19937 rng(9);
  const auto mesh = pentagon(8);
  const ScalarField target = ScalarField::split(0, 0.25, -1.0, 1.0);
  const DiscreteProblem prob(mesh, nullptr, 0.3, target);
  const reference::DenseModel dense = reference::build_dense_model(*mesh, nullptr, 0.3, target);
  for (int probe = 0; probe < 5; ++probe) {
    const Vector u = random_vector(prob.num_boundary(), rng);
    CHECK(prob.evaluate_J(u) == doctest::Approx(reference::dense_objective(*mesh, dense, target, u)).epsilon(1e-12));
  }
}

TEST_CASE("central differences of the objective match the reduced gradient") {
  std::mt19937 rng(13);
  const DiscreteProblem prob(pentagon(8), nullptr, 1.0, ScalarField::constant(1.0));
  const Vector u = random_vector(prob.num_boundary(), rng);
  const Vector grad = prob.apply_A(u) - prob.f();
  for (int probe = 0; probe < 5; ++probe) {
    const Vector v = random_vector(prob.num_boundary(), rng);
    const double exact = v.dot(grad);
    for (double t : {1e-4, 1e-5, 1e-6}) {
      const double fd = (prob.evaluate_J(u + t * v) - prob.evaluate_J(u - t * v)) / (2 * t);
      CHECK(std::abs(fd - exact) <= 1e-6 * std::abs(exact) + 1e-9);
    }
  }
}

TEST_CASE("minimizer of the reduced problem is stationary") {
  const DiscreteProblem prob(pentagon(8), nullptr, 1.0, ScalarField::squared_norm());
  PcgOptions opt;
  opt.rel_tol = 1e-13;
  const PcgResult res = pcg(prob.reduced_operator(), prob.f(), &prob.preconditioner(),
                            Vector::Zero(prob.num_boundary()), opt);
  REQUIRE(res.converged);
  const double j0 = prob.evaluate_J(res.x);
  for (Index k = 0; k < prob.num_boundary(); k += 3) {
    Vector e = Vector::Zero(prob.num_boundary());
    e[k] = 1e-3;
    CHECK(prob.evaluate_J(res.x + e) >= j0);
    CHECK(prob.evaluate_J(res.x - e) >= j0);
  }
}

TEST_CASE("penalized operator and right-hand side") {
  std::mt19937 rng(17);
  const auto mesh = pentagon(8);
  const RegionPredicate omega = closed_ball({-0.1, -0.1, 0}, 0.2);
  const DiscreteProblem prob(mesh, omega, 1.0, ScalarField::constant(1.0));
  const reference::DenseModel dense = reference::build_dense_model(*mesh, omega, 1.0, ScalarField::constant(1.0));
  require_same_partition(prob, dense);
  REQUIRE(prob.sets().omega == dense.omega);
  REQUIRE(prob.sets().omega.size() >= 4);

  const Vector u = random_vector(prob.num_boundary(), rng);
  const FieldVector mu = FieldVector::Zero(mesh->num_nodes());
  const FieldVector b = FieldVector::Constant(mesh->num_nodes(), 0.15);

  PenalizedOperator none{&prob, 1e3, FieldVector::Zero(mesh->num_nodes())};
  CHECK(max_abs(none.apply(u) - prob.apply_A(u)) == 0.0);
  CHECK(max_abs(none.rhs(mu, b) - prob.f()) <= 1e-15 * max_abs(prob.f()));

  std::vector<Index> active;
  for (std::size_t k = 0; k < prob.sets().omega.size(); k += 2) active.push_back(prob.sets().omega[k]);
  const FieldVector h = penalty_diagonal(prob, active);
  PenalizedOperator zero_gamma{&prob, 0.0, h};
  CHECK(max_abs(zero_gamma.apply(u) - prob.apply_A(u)) == 0.0);

  Matrix hd = Matrix::Zero(mesh->num_nodes(), mesh->num_nodes());
  for (Index j : active) hd(j, j) = dense.lumped[j];
  FieldVector shift = random_vector(mesh->num_nodes(), rng);
  const FieldVector bound = random_vector(mesh->num_nodes(), rng);
  for (double gamma : {10.0, 1e4}) {
    PenalizedOperator pen{&prob, gamma, h};
    const Matrix dense_op = dense.A + gamma * dense.S.transpose() * hd * dense.S;
    CHECK(max_abs(pen.apply(u) - dense_op * u) <= 1e-11 * dense_op.lpNorm<Eigen::Infinity>());
    const Vector c_dense = dense.f + dense.S.transpose() * hd * (gamma * bound - shift);
    CHECK(max_abs(pen.rhs(shift, bound) - c_dense) <= 1e-11 * std::max(1.0, max_abs(c_dense)));
  }
  PenalizedOperator pen{&prob, 1e3, h};
  CHECK(max_abs(pen.rhs(mu, FieldVector::Zero(mesh->num_nodes())) - prob.f()) <= 1e-15);
}

TEST_CASE("assembled optimality systems") {
  const DiscreteProblem prob(pentagon(8), closed_ball({-0.1, -0.1, 0}, 0.2), 1.0, ScalarField::squared_norm());
  PcgOptions opt;
  opt.rel_tol = 1e-13;
  const PcgResult res = pcg(prob.reduced_operator(), prob.f(), &prob.preconditioner(),
                            Vector::Zero(prob.num_boundary()), opt);

  const KktSolution plain = solve_kkt(prob, assemble_kkt(prob));
  CHECK(max_abs(plain.u - res.x) <= 1e-8 * max_abs(res.x));

  PenaltyLinearization zero;
  zero.gamma = 1e5;
  zero.h = FieldVector::Zero(prob.mesh().num_nodes());
  zero.load = FieldVector::Zero(prob.mesh().num_nodes());
  const KktSolution with_zero_penalty = solve_kkt(prob, assemble_kkt(prob, nullptr, &zero));
  CHECK(max_abs(with_zero_penalty.u - plain.u) <= 1e-12);

  FixedControls all;
  all.values = Vector::Constant(prob.num_boundary(), 0.16);
  for (Index k = 0; k < prob.num_boundary(); ++k) all.positions.push_back(k);
  const KktSolution pinned = solve_kkt(prob, assemble_kkt(prob, &all));
  CHECK(max_abs(pinned.u.array() - 0.16) == 0.0);
  // The multipliers equal the reduced gradient residual f - A u at the pinned values.
  const Vector expected = prob.f() - prob.apply_A(all.values);
  CHECK(max_abs(pinned.lambda_fixed - expected) <= 1e-9 * std::max(1.0, max_abs(expected)));
}

TEST_CASE("PCG iterations grow as the Tikhonov weight vanishes") {
  const auto mesh = pentagon(32);
  auto iterations = [&](double nu) {
    const DiscreteProblem prob(mesh, nullptr, nu, ScalarField::squared_norm());
    return pcg(prob.reduced_operator(), prob.f(), &prob.preconditioner(), Vector::Zero(prob.num_boundary()))
        .iterations;
  };
  CHECK(iterations(0.0) > iterations(1.0));
}

TEST_CASE("a corrupted boundary mass breaks the adjoint identity") {
  std::mt19937 rng(19);
  const auto mesh = pentagon(8);
  IndexSets sets = classify_indices(*mesh);
  FemMatrices fem = assemble(*mesh, sets);
  fem.boundary_mass *= 1.01;
  const DiscreteProblem prob(mesh, std::move(sets), std::move(fem), 1.0, ScalarField::constant(1.0));
  const reference::DenseModel dense = reference::build_dense_model(*mesh, nullptr, 1.0, ScalarField::constant(1.0));
  const Vector u = random_vector(prob.num_boundary(), rng);
  const FieldVector y = random_vector(mesh->num_nodes(), rng);
  const double lhs = prob.apply_S(u).dot(dense.M * y);
  const double rhs = u.dot(dense.B_bb * prob.normal_derivative(y));
  CHECK(std::abs(lhs - rhs) > 1e-4 * std::abs(lhs));
}
