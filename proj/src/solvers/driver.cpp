#include <chrono>
#include <cmath>

#include "dck/solvers.hpp"

namespace dck {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

ReportRow geometry_row(const DiscreteProblem& prob, int level) {
  ReportRow row;
  row.level = level;
  row.h = prob.mesh().h();
  row.num_nodes = prob.sets().num_nodes();
  row.num_interior = prob.num_interior();
  row.num_boundary = prob.num_boundary();
  row.nu = prob.nu();
  return row;
}

void fill_from_result(ReportRow& row, const DiscreteProblem& prob, const LevelResult& res) {
  row.newton = res.newton;
  row.pcg = res.pcg;
  row.num_active = static_cast<Index>(res.sets.upper.size() + res.sets.lower.size());
  row.num_active_omega = static_cast<Index>(res.sets.omega_upper.size() + res.sets.omega_lower.size());
  row.J = prob.evaluate_J(res.u);
  row.converged = res.converged;
}

void push_row(SolverReport& report, const ReportRow& row, const LevelResult& res) {
  report.rows.push_back(row);
  std::vector<Index> active = res.sets.omega_upper;
  active.insert(active.end(), res.sets.omega_lower.begin(), res.sets.omega_lower.end());
  report.row_active_omega.push_back(std::move(active));
}

void finish(SolverReport& report, std::shared_ptr<const DiscreteProblem> prob, const LevelResult& res) {
  report.u = res.u;
  report.y = res.y;
  report.lambda = res.lambda;
  report.problem = std::move(prob);
}

BoundaryVector warm_start(const BoundaryVector& u, const Mesh& coarse, const Mesh& fine,
                          const BoxBounds* fine_box) {
  if (fine_box) return prolong_boundary(u, coarse, fine, &fine_box->lower, &fine_box->upper);
  return prolong_boundary(u, coarse, fine);
}

LevelResult penalized_step(const DiscreteProblem& prob, const BoxBounds* box, const StateData& state,
                           double gamma, const BoundaryVector* u0, const SolverOptions& options) {
  return box ? solve_penalized_box(prob, *box, state, gamma, u0, options)
             : solve_penalized(prob, state, gamma, u0, options);
}

// Continuation in gamma over the nested ladder: refine once the multiplier
// residual drops below C h^2 (or the violation below e_inf), stop once that
// happens on the finest mesh.
SolverReport continuation(ProblemLadder& ladder, bool with_box) {
  const ProblemSpec& spec = ladder.spec();
  if (!spec.state) throw std::invalid_argument("continuation needs a state constraint");
  if (with_box && !spec.control) throw std::invalid_argument("combined solve needs control bounds");
  const ContinuationOptions& opt = spec.continuation;
  if (!(opt.gamma0 > 0) || !(opt.tau > 1)) throw std::invalid_argument("need gamma0 > 0 and tau > 1");
  const int last = ladder.num_levels() - 1;

  SolverReport report;
  int j = 0;
  auto prob = ladder.problem(0);
  StateData state = state_data(*prob, *spec.state);
  std::optional<BoxBounds> box;
  if (with_box) box = box_bounds(*prob, *spec.control);
  BoundaryVector u = BoundaryVector::Zero(prob->num_boundary());
  double gamma = opt.gamma0;
  LevelResult res;
  for (int n = 0;; ++n) {
    const auto start = Clock::now();
    try {
      res = penalized_step(*prob, box ? &*box : nullptr, state, gamma, &u, spec.solver);
    } catch (const Error& e) {
      report.converged = false;
      report.message = std::string("inner solve failed: ") + e.what();
      break;
    }
    ReportRow row = geometry_row(*prob, ladder.level(j));
    row.gamma = gamma;
    fill_from_result(row, *prob, res);
    row.r_d = multiplier_residual_rd(*prob, state, res.y, res.sets);
    row.mcv = max_constraint_violation(*prob, state, res.y);
    row.seconds = seconds_since(start);
    push_row(report, row, res);
    report.overlap_resolutions += res.overlaps;
    finish(report, prob, res);
    report.multiplier = recover_multiplier(*prob, state, res.y, gamma);
    if (!res.converged) {
      report.converged = false;
      report.message = "semismooth Newton hit its iteration cap";
      break;
    }

    const double h = prob->mesh().h();
    const bool criterion = row.r_d < opt.rd_constant * h * h || row.mcv <= opt.e_inf;
    const bool at_ceiling = opt.gamma_max <= 0 || gamma >= opt.gamma_max * (1 - 1e-12);
    if (criterion && j == last && at_ceiling) break;
    if (j == last && opt.gamma_max > 0 && at_ceiling) {
      report.converged = false;
      report.message = "stopping criterion not met at the penalty ceiling";
      break;
    }
    if (n + 1 > opt.n_max) {
      report.converged = false;
      report.message = "continuation step cap reached";
      break;
    }
    if (criterion && j < last) {
      const auto coarse = prob;
      prob = ladder.problem(++j);
      ladder.release_below(j);
      state = state_data(*prob, *spec.state);
      if (with_box) box = box_bounds(*prob, *spec.control);
      u = warm_start(res.u, coarse->mesh(), prob->mesh(), box ? &*box : nullptr);
    } else {
      u = res.u;
    }
    gamma *= opt.tau;
    if (opt.gamma_max > 0) gamma = std::min(gamma, opt.gamma_max);
  }

  // Optional sweep of larger penalties on the final mesh.
  for (double g : spec.gamma_ladder) {
    if (!report.converged || g <= gamma * (1 + 1e-12)) continue;
    gamma = g;
    const auto start = Clock::now();
    try {
      res = penalized_step(*prob, box ? &*box : nullptr, state, gamma, &report.u, spec.solver);
    } catch (const Error& e) {
      report.converged = false;
      report.message = std::string("inner solve failed: ") + e.what();
      break;
    }
    ReportRow row = geometry_row(*prob, ladder.level(j));
    row.gamma = gamma;
    fill_from_result(row, *prob, res);
    row.r_d = multiplier_residual_rd(*prob, state, res.y, res.sets);
    row.mcv = max_constraint_violation(*prob, state, res.y);
    row.seconds = seconds_since(start);
    push_row(report, row, res);
    finish(report, prob, res);
    report.multiplier = recover_multiplier(*prob, state, res.y, gamma);
    if (!res.converged) {
      report.converged = false;
      report.message = "semismooth Newton hit its iteration cap";
    }
  }
  return report;
}

// One independent solve per level, optionally seeded from the coarser one.
SolverReport level_sweep(ProblemLadder& ladder) {
  const ProblemSpec& spec = ladder.spec();
  SolverReport report;
  BoundaryVector previous;
  std::shared_ptr<const DiscreteProblem> coarse;
  for (int j = 0; j < ladder.num_levels(); ++j) {
    const auto start = Clock::now();
    auto prob = ladder.problem(j);
    ladder.release_below(j);
    std::optional<BoxBounds> box;
    if (spec.control) box = box_bounds(*prob, *spec.control);
    std::optional<StateData> state;
    if (spec.state) state = state_data(*prob, *spec.state);
    std::optional<BoundaryVector> u0;
    if (spec.nested_warm_start && coarse)
      u0 = warm_start(previous, coarse->mesh(), prob->mesh(), box ? &*box : nullptr);
    const BoundaryVector* seed = u0 ? &*u0 : nullptr;

    LevelResult res;
    try {
      if (state) {
        const double gamma = spec.fixed_gamma.value_or(spec.continuation.gamma0);
        res = penalized_step(*prob, box ? &*box : nullptr, *state, gamma, seed, spec.solver);
      } else if (box) {
        res = solve_control_constrained(*prob, *box, seed, nullptr, spec.solver);
      } else {
        res = solve_unconstrained(*prob, spec.method, seed, spec.solver);
      }
    } catch (const Error& e) {
      report.converged = false;
      report.message = "level " + std::to_string(ladder.level(j)) + ": " + e.what();
      break;
    }
    ReportRow row = geometry_row(*prob, ladder.level(j));
    fill_from_result(row, *prob, res);
    if (state) {
      row.gamma = spec.fixed_gamma.value_or(spec.continuation.gamma0);
      row.r_d = multiplier_residual_rd(*prob, *state, res.y, res.sets);
      row.mcv = max_constraint_violation(*prob, *state, res.y);
      report.multiplier = recover_multiplier(*prob, *state, res.y, row.gamma);
    }
    row.seconds = seconds_since(start);
    push_row(report, row, res);
    report.overlap_resolutions += res.overlaps;
    finish(report, prob, res);
    if (!res.converged) {
      report.converged = false;
      report.message = "level " + std::to_string(ladder.level(j)) + ": solver did not converge";
      break;
    }
    previous = res.u;
    coarse = prob;
  }
  return report;
}

}  // namespace

SolverReport solve_state_constrained(ProblemLadder& ladder) { return continuation(ladder, false); }

SolverReport solve_control_state(ProblemLadder& ladder) { return continuation(ladder, true); }

SolverReport solve_ladder(ProblemLadder& ladder) {
  const ProblemSpec& spec = ladder.spec();
  if (spec.state && !spec.fixed_gamma)
    return spec.control ? solve_control_state(ladder) : solve_state_constrained(ladder);
  return level_sweep(ladder);
}

}  // namespace dck
