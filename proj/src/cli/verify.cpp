#include "dck/cli/verify.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <thread>

#include "dck/reference/dense.hpp"
#include "dck/solvers.hpp"

namespace dck::cli {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Context {
  bool quick;
  bool corrupt;
  std::mt19937 rng;
};

// Outcome of one check: the worst measured quantity against its limit.
struct Measure {
  explicit Measure(double limit_value) : limit(limit_value) {}

  double worst = 0.0;
  double limit;
  bool ok = true;
  std::string note;

  void bound(double value) {
    worst = std::max(worst, value);
    if (!(value <= limit)) ok = false;
  }
  void require(bool condition, const std::string& what) {
    if (!condition) {
      ok = false;
      if (note.empty()) note = what;
    }
  }
};

using CheckFn = std::function<Measure(Context&)>;

double max_abs(const Vector& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

double rel_diff(const Vector& u, const Vector& ref) {
  return max_abs(u - ref) / std::max(1.0, max_abs(ref));
}

Vector random_vector(Index n, std::mt19937& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

std::shared_ptr<const Mesh> pentagon(int n) { return std::make_shared<Mesh>(build_pentagon_mesh(n)); }
std::shared_ptr<const Mesh> cube(int n) { return std::make_shared<Mesh>(build_cube_mesh(n)); }

RegionPredicate constraint_ball() { return closed_ball({-0.1, -0.1, 0}, 0.2); }

StateBound ball_bound(double b) {
  StateBound s;
  s.region = {{-0.1, -0.1, 0}, 0.2};
  s.upper = ScalarField::constant(b);
  return s;
}

SolverOptions tight() {
  SolverOptions o;
  o.pcg_rel_tol = 1e-12;
  return o;
}

// Production problem, optionally built from a deliberately corrupted boundary mass.
std::shared_ptr<const DiscreteProblem> make_problem(const Context& ctx, std::shared_ptr<const Mesh> mesh,
                                                    const RegionPredicate& omega, double nu,
                                                    const ScalarField& target) {
  if (!ctx.corrupt) return std::make_shared<DiscreteProblem>(mesh, omega, nu, target);
  IndexSets sets = classify_indices(*mesh, omega);
  FemMatrices fem = assemble(*mesh, sets);
  fem.boundary_mass *= 1.01;
  return std::make_shared<DiscreteProblem>(mesh, std::move(sets), std::move(fem), nu, target);
}

struct Pair {
  std::shared_ptr<const DiscreteProblem> prob;
  reference::DenseModel dense;
};

Pair make_pair(const Context& ctx, std::shared_ptr<const Mesh> mesh, const RegionPredicate& omega, double nu,
               const ScalarField& target) {
  Pair p{make_problem(ctx, mesh, omega, nu, target), reference::build_dense_model(*mesh, omega, nu, target)};
  if (p.prob->sets().boundary != p.dense.boundary || p.prob->sets().interior != p.dense.interior ||
      p.prob->sets().omega != p.dense.omega)
    throw Error("node partition differs from the dense reference");
  return p;
}

std::vector<std::shared_ptr<const Mesh>> probe_meshes(const Context& ctx) {
  if (ctx.quick) return {pentagon(4), cube(2)};
  return {pentagon(4), pentagon(8), cube(2), cube(4)};
}

Measure adjoint_identity(Context& ctx) {
  Measure m(1e-12);
  const int probes = ctx.quick ? 10 : 50;
  for (const auto& mesh : probe_meshes(ctx)) {
    const Pair p = make_pair(ctx, mesh, nullptr, 1.0, ScalarField::constant(1.0));
    for (int k = 0; k < probes; ++k) {
      const Vector u = random_vector(p.prob->num_boundary(), ctx.rng);
      const FieldVector y = random_vector(mesh->num_nodes(), ctx.rng);
      const FieldVector su = p.prob->apply_S(u);
      const double lhs = su.dot(p.dense.M * y);
      const double rhs = u.dot(p.dense.B_bb * p.prob->normal_derivative(y));
      const double scale = std::sqrt(su.dot(p.dense.M * su) * y.dot(p.dense.M * y));
      m.bound(std::abs(lhs - rhs) / scale);
    }
  }
  return m;
}

Measure operator_spd(Context& ctx) {
  Measure m(1e-12);
  for (const auto& mesh : probe_meshes(ctx)) {
    for (double nu : {1.0, 0.0}) {
      const auto prob = make_problem(ctx, mesh, nullptr, nu, ScalarField::constant(1.0));
      for (int k = 0; k < 20; ++k) {
        const Vector u = random_vector(prob->num_boundary(), ctx.rng);
        const Vector v = random_vector(prob->num_boundary(), ctx.rng);
        const Vector au = prob->apply_A(u), av = prob->apply_A(v);
        m.bound(std::abs(v.dot(au) - u.dot(av)) / (au.norm() * v.norm()));
        m.require(u.dot(au) > 0.0, "u'Au <= 0");
      }
    }
  }
  return m;
}

Measure mass_matrices(Context& ctx) {
  Measure m(1e-13);
  for (const auto& mesh : probe_meshes(ctx)) {
    const Pair p = make_pair(ctx, mesh, constraint_ball(), 1.0, ScalarField::constant(1.0));
    const reference::Matrix mass = p.prob->fem().mass;
    const reference::Matrix bmass = p.prob->fem().boundary_mass;
    m.bound((mass - p.dense.M).cwiseAbs().maxCoeff() / p.dense.M.cwiseAbs().maxCoeff());
    m.bound((bmass - p.dense.B).cwiseAbs().maxCoeff() / p.dense.B.cwiseAbs().maxCoeff());
    for (int k = 0; k < 10; ++k) {
      const FieldVector y = random_vector(mesh->num_nodes(), ctx.rng);
      const Vector u = random_vector(p.prob->num_boundary(), ctx.rng);
      m.require(y.dot(p.prob->fem().mass * y) > 0.0, "M not positive");
      m.require(u.dot(p.prob->boundary_mass_bb() * u) > 0.0, "B_BB not positive");
    }
    for (Index j : p.prob->sets().omega) m.require(p.prob->fem().lumped_omega[j] > 0.0, "lumped mass not positive");
  }
  return m;
}

Measure gradient_check(Context& ctx) {
  Measure m(1e-6);
  for (const auto& mesh : probe_meshes(ctx)) {
    const auto prob = make_problem(ctx, mesh, nullptr, 0.7, ScalarField::squared_norm());
    for (int k = 0; k < 5; ++k) {
      const Vector u = random_vector(prob->num_boundary(), ctx.rng);
      const Vector v = random_vector(prob->num_boundary(), ctx.rng);
      const double slope = (prob->apply_A(u) - prob->f()).dot(v);
      for (double t : {1e-3, 1e-4}) {
        const double fd = (prob->evaluate_J(u + t * v) - prob->evaluate_J(u - t * v)) / (2 * t);
        m.bound(std::abs(fd - slope) / std::max(1.0, std::abs(slope)));
      }
    }
  }
  return m;
}

// The quadratic form uses the projected target, so both agree for P1 targets.
Measure objective_two_ways(Context& ctx) {
  Measure m(1e-10);
  for (const auto& mesh : probe_meshes(ctx)) {
    for (const ScalarField& target : {ScalarField::constant(1.0), ScalarField::linear({0.3, -0.5, 0.2}, 0.1)}) {
      const auto prob = make_problem(ctx, mesh, nullptr, 0.7, target);
      for (int k = 0; k < 10; ++k) {
        const Vector u = random_vector(prob->num_boundary(), ctx.rng);
        const double q = prob->quadratic_J(u);
        m.bound(std::abs(prob->evaluate_J(u) - q) / std::abs(q));
      }
    }
  }
  return m;
}

Measure pcg_vs_kkt(Context& ctx) {
  Measure m(1e-8);
  for (const auto& mesh : probe_meshes(ctx)) {
    for (double nu : {1.0, 0.0}) {
      const auto prob = make_problem(ctx, mesh, nullptr, nu, ScalarField::squared_norm());
      const LevelResult a = solve_unconstrained(*prob, UnconstrainedMethod::ReducedPcg);
      const LevelResult b = solve_unconstrained(*prob, UnconstrainedMethod::KktDirect);
      m.require(a.converged && b.converged, "solver did not converge");
      m.bound(rel_diff(a.u, b.u));
    }
  }
  return m;
}

Measure oracle_unconstrained(Context& ctx) {
  Measure m(1e-8);
  for (const auto& mesh : probe_meshes(ctx)) {
    for (double nu : {1.0, 0.0}) {
      const Pair p = make_pair(ctx, mesh, nullptr, nu, ScalarField::constant(1.0));
      const Vector ref = Eigen::LDLT<reference::Matrix>(p.dense.A).solve(p.dense.f);
      const LevelResult r = solve_unconstrained(*p.prob, UnconstrainedMethod::ReducedPcg, nullptr, tight());
      m.require(r.converged, "PCG did not converge");
      m.bound(rel_diff(r.u, ref));
    }
  }
  return m;
}

Measure oracle_control(Context& ctx) {
  Measure m(1e-8);
  struct Case {
    std::shared_ptr<const Mesh> mesh;
    double nu;
    ScalarField target;
    ControlBounds bounds;
  };
  std::vector<Case> cases{
      {pentagon(8), 1.0, ScalarField::constant(1.0), {ScalarField(), ScalarField::constant(0.16)}},
      {pentagon(8), 0.0, ScalarField::split(0, 0.25, -1.0, 1.0),
       {ScalarField::constant(-1.2), ScalarField::constant(0.16)}},
  };
  if (!ctx.quick) cases.push_back({cube(4), 1.0, ScalarField::constant(1.0), {ScalarField(), ScalarField::constant(0.16)}});
  for (const Case& c : cases) {
    const Pair p = make_pair(ctx, c.mesh, nullptr, c.nu, c.target);
    const BoxBounds box = box_bounds(*p.prob, c.bounds);
    const reference::DenseQpSolution ref =
        reference::solve_dense_qp(reference::make_dense_qp(p.dense, box.lower, box.upper));
    m.require(ref.verified, "dense oracle not verified");
    const LevelResult r = solve_control_constrained(*p.prob, box, nullptr, nullptr, tight());
    m.require(r.converged, "semismooth Newton did not converge");
    m.require(r.sets.upper == ref.at_upper && r.sets.lower == ref.at_lower, "active sets differ");
    m.bound(rel_diff(r.u, ref.u));
    m.bound(rel_diff(r.lambda, ref.lambda));
  }
  return m;
}

Measure oracle_penalized(Context& ctx, bool with_box) {
  Measure m(1e-8);
  const Pair p = make_pair(ctx, pentagon(8), constraint_ball(), 1.0, ScalarField::constant(1.0));
  const StateData state = state_data(*p.prob, ball_bound(0.15));
  const BoxBounds box = box_bounds(*p.prob, {ScalarField(), ScalarField::constant(0.16)});
  const FieldVector b = FieldVector::Constant(p.prob->mesh().num_nodes(), 0.15);
  const std::vector<double> gammas = ctx.quick ? std::vector<double>{1e3} : std::vector<double>{10.0, 1e3, 1e5};
  for (double gamma : gammas) {
    const reference::DenseQpSolution ref = with_box
        ? reference::solve_dense_qp(reference::make_dense_qp(p.dense, box.lower, box.upper, gamma, b))
        : reference::solve_dense_qp(reference::make_dense_qp(p.dense, {}, {}, gamma, b));
    m.require(ref.verified, "dense oracle not verified");
    const LevelResult r = with_box ? solve_penalized_box(*p.prob, box, state, gamma, nullptr, tight())
                                   : solve_penalized(*p.prob, state, gamma, nullptr, tight());
    m.require(r.converged, "semismooth Newton did not converge");
    m.require(!r.sets.omega_upper.empty(), "state bound never active");
    m.bound(rel_diff(r.u, ref.u));
    if (with_box) {
      m.require(r.sets.upper == ref.at_upper, "control active sets differ");
      m.bound(rel_diff(r.lambda, ref.lambda));
    }
  }
  return m;
}

Measure two_segment_boundary_mass(Context&) {
  // Gamma = [-1, 1] with nodes -1, 0, 1.
  Measure m(1e-16);
  Eigen::Matrix3d exact;
  exact << 2, 1, 0, 1, 4, 1, 0, 1, 2;
  exact /= 6.0;
  Eigen::Matrix3d assembled = Eigen::Matrix3d::Zero();
  const Eigen::Matrix3d segment = facet_mass(2, 1.0);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) assembled(s + a, s + b) += segment(a, b);
  m.bound((assembled - exact).cwiseAbs().maxCoeff());
  return m;
}

Measure weighted_projection(Context&) {
  // min 1/2 |u - w|_B^2 over u <= 0 differs from clipping w pointwise.
  Measure m(1e-14);
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
  m.require(sol.verified, "dense oracle not verified");
  m.bound(max_abs(sol.u - Eigen::Vector3d(-1.5, 0, 0)));
  const ActiveSets pointwise = control_active_sets(w, Vector::Zero(3), {qp.lower, qp.upper}, 1.0);
  m.require(pointwise.upper == std::vector<Index>{1, 2}, "pointwise active set");
  m.require(max_abs(w.cwiseMin(0.0) - sol.u) > 0.49, "clipping coincides with the projection");
  return m;
}

Measure newton_fixed_point(Context& ctx) {
  Measure m(1e-10);
  const auto prob = make_problem(ctx, pentagon(ctx.quick ? 8 : 16), nullptr, 1.0, ScalarField::constant(1.0));
  const BoxBounds box = box_bounds(*prob, {ScalarField(), ScalarField::constant(0.16)});
  const LevelResult r = solve_control_constrained(*prob, box);
  const LevelResult again = solve_control_constrained(*prob, box, &r.u, &r.lambda);
  m.require(r.converged && again.converged, "semismooth Newton did not converge");
  m.require(again.newton == 1, "restart from the solution took more than one step");
  m.require(again.sets.same_control(r.sets), "active sets moved");
  m.bound(rel_diff(again.u, r.u));
  return m;
}

Measure nu_zero_solvable(Context& ctx) {
  Measure m(0.0);
  const auto prob = make_problem(ctx, pentagon(ctx.quick ? 8 : 16), constraint_ball(), 0.0, ScalarField::constant(1.0));
  const StateData state = state_data(*prob, ball_bound(0.15));
  const BoxBounds box = box_bounds(*prob, {ScalarField(), ScalarField::constant(0.16)});
  m.require(solve_unconstrained(*prob, UnconstrainedMethod::ReducedPcg).converged, "reduced PCG");
  m.require(solve_unconstrained(*prob, UnconstrainedMethod::KktDirect).converged, "assembled system");
  m.require(solve_control_constrained(*prob, box).converged, "control-constrained");
  m.require(solve_penalized(*prob, state, 1e3).converged, "penalized");
  m.require(solve_penalized_box(*prob, box, state, 1e3).converged, "combined");
  return m;
}

Measure nu_trend(Context& ctx) {
  Measure m(0.0);
  const auto mesh = pentagon(ctx.quick ? 16 : 32);
  int previous = 0;
  std::string counts;
  for (double nu : {1e4, 1.0, 1e-4, 0.0}) {
    const auto prob = make_problem(ctx, mesh, nullptr, nu, ScalarField::squared_norm());
    const LevelResult r = solve_unconstrained(*prob, UnconstrainedMethod::ReducedPcg);
    m.require(r.converged, "PCG did not converge");
    m.require(r.pcg >= previous, "iterations decreased as nu decreased");
    previous = r.pcg;
    counts += (counts.empty() ? "" : " ") + std::to_string(r.pcg);
  }
  m.note = m.note.empty() ? "pcg " + counts : m.note + "; pcg " + counts;
  return m;
}

struct Check {
  const char* name;
  CheckFn fn;
};

std::vector<Check> checks() {
  return {
      {"adjoint identity", adjoint_identity},
      {"reduced operator symmetric positive definite", operator_spd},
      {"mass matrices match dense assembly and are positive", mass_matrices},
      {"gradient matches central differences", gradient_check},
      {"objective by quadrature matches the quadratic form", objective_two_ways},
      {"reduced PCG matches the assembled system", pcg_vs_kkt},
      {"unconstrained solve matches dense oracle", oracle_unconstrained},
      {"control-constrained solve matches dense oracle", oracle_control},
      {"penalized solve matches dense oracle", [](Context& c) { return oracle_penalized(c, false); }},
      {"combined solve matches dense oracle", [](Context& c) { return oracle_penalized(c, true); }},
      {"boundary mass of two unit segments", two_segment_boundary_mass},
      {"weighted projection differs from pointwise clipping", weighted_projection},
      {"semismooth Newton fixed point", newton_fixed_point},
      {"all solvers run with nu = 0", nu_zero_solvable},
      {"PCG iterations grow as nu vanishes", nu_trend},
  };
}

std::string describe(const Measure& m) {
  std::string out;
  if (m.limit > 0) {
    char buffer[96];
    std::snprintf(buffer, sizeof buffer, "worst %.3E, limit %.1E", m.worst, m.limit);
    out = buffer;
  }
  if (!m.note.empty()) out += (out.empty() ? "" : "; ") + m.note;
  return out;
}

}  // namespace

int threads_from_env(int fallback) {
  if (const char* text = std::getenv("DCK_THREADS")) {
    const int n = std::atoi(text);
    if (n >= 1) return n;
  }
  return std::max(1, fallback);
}

std::vector<CheckResult> run_verify(const VerifyOptions& options) {
  const std::vector<Check> list = checks();
  std::vector<CheckResult> results(list.size());
  const int hardware = static_cast<int>(std::thread::hardware_concurrency());
  const int threads = options.threads > 0 ? options.threads : threads_from_env(hardware);

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k = next++; k < list.size(); k = next++) {
      CheckResult& out = results[k];
      out.name = list[k].name;
      Context ctx{options.quick, options.corrupt_boundary_mass,
                  std::mt19937(options.seed * 7919u + static_cast<unsigned>(k))};
      const auto start = std::chrono::steady_clock::now();
      try {
        const Measure m = list[k].fn(ctx);
        out.passed = m.ok;
        out.detail = describe(m);
      } catch (const std::exception& e) {
        out.passed = false;
        out.detail = std::string("error: ") + e.what();
      }
      out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::min<int>(threads, static_cast<int>(list.size())); ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  return results;
}

bool print_verify(std::ostream& out, const std::vector<CheckResult>& results) {
  bool all = true;
  for (const CheckResult& r : results) {
    all = all && r.passed;
    char seconds[32];
    std::snprintf(seconds, sizeof seconds, "%.2fs", r.seconds);
    out << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << (r.detail.empty() ? "" : r.detail + ", ")
        << seconds << ")\n";
  }
  out << (all ? "all checks passed" : "some checks failed") << '\n';
  return all;
}

}  // namespace dck::cli
