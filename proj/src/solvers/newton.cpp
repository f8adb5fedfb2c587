#include <algorithm>
#include <cmath>

#include "dck/solvers.hpp"

namespace dck {

ActiveSets control_active_sets(const BoundaryVector& u, const BoundaryVector& lambda,
                               const BoxBounds& bounds, double c) {
  if (!(c > 0)) throw std::invalid_argument("complementarity parameter must be positive");
  ActiveSets s;
  s.c = c;
  for (Index k = 0; k < u.size(); ++k) {
    const double up = lambda[k] + c * (u[k] - bounds.upper[k]);
    const double lo = lambda[k] + c * (u[k] - bounds.lower[k]);
    const bool is_up = up > 0;
    const bool is_lo = lo < 0;
    if (is_up && is_lo) {
      ++s.overlaps;
      (up >= -lo ? s.upper : s.lower).push_back(k);
    } else if (is_up) {
      s.upper.push_back(k);
    } else if (is_lo) {
      s.lower.push_back(k);
    }
  }
  return s;
}

std::vector<Index> state_active_set(const FieldVector& y, double gamma, const FieldVector& shift,
                                    const FieldVector& bound, const IndexSets& sets) {
  if (!(gamma > 0)) throw std::invalid_argument("penalty parameter must be positive");
  std::vector<Index> active;
  for (Index j : sets.omega)
    if (shift[j] + gamma * (y[j] - bound[j]) > 0) active.push_back(j);
  return active;
}

namespace {

void update_state_sets(const DiscreteProblem& prob, const StateData& state, double gamma,
                       const FieldVector& y, ActiveSets& sets) {
  sets.omega_upper = state_active_set(y, gamma, state.shift, state.upper, prob.sets());
  sets.omega_lower.clear();
  if (state.has_lower) {
    // y >= a is the upper bound -y <= -a.
    sets.omega_lower = state_active_set(-y, gamma, state.lower_shift, -state.lower, prob.sets());
  }
}

double default_complementarity(const DiscreteProblem& prob, const SolverOptions& options) {
  if (options.complementarity > 0) return options.complementarity;
  return prob.nu() > 0 ? prob.nu() : 1.0;
}

// Lumped L2 norm over omega of the difference between the multiplier
// predicted by the last linearization and the one at the new state.
double multiplier_change(const DiscreteProblem& prob, const StateData& state, double gamma,
                         const FieldVector& y, const ActiveSets& used) {
  const Vector& l = prob.fem().lumped_omega;
  std::vector<char> in_up(prob.sets().num_nodes(), 0), in_lo(prob.sets().num_nodes(), 0);
  for (Index j : used.omega_upper) in_up[j] = 1;
  for (Index j : used.omega_lower) in_lo[j] = 1;
  double total = 0;
  for (Index j : prob.sets().omega) {
    const double up = state.shift[j] + gamma * (y[j] - state.upper[j]);
    double d = (in_up[j] ? up : 0.0) - std::max(up, 0.0);
    if (state.has_lower) {
      const double lo = state.lower_shift[j] + gamma * (state.lower[j] - y[j]);
      d -= (in_lo[j] ? lo : 0.0) - std::max(lo, 0.0);
    }
    total += l[j] * d * d;
  }
  return std::sqrt(total);
}

// Shared semismooth Newton loop. Control bounds and the penalized state
// bound are both optional; with neither it is a single reduced solve.
LevelResult newton_loop(const DiscreteProblem& prob, const BoxBounds* box, const StateData* state,
                        double gamma, const BoundaryVector* u0, const BoundaryVector* lambda0,
                        const SolverOptions& options) {
  const Index nb = prob.num_boundary();
  LevelResult res;
  res.u = u0 ? *u0 : BoundaryVector::Zero(nb);
  if (res.u.size() != nb) throw std::invalid_argument("initial control has the wrong length");
  res.y = prob.apply_S(res.u);
  const double c = default_complementarity(prob, options);
  const double eps_lambda =
      options.eps_lambda >= 0 ? options.eps_lambda : 1e-10 * std::sqrt(domain_measure(prob.mesh()));

  ActiveSets sets;
  sets.c = c;
  PenalizedOperator op{&prob, state ? gamma : 0.0, FieldVector()};
  BoundaryVector rhs = prob.f();
  auto linearize = [&]() {
    if (!state) return;
    const PenaltyLinearization pen = penalty_linearization(prob, *state, gamma, sets);
    op.h = pen.h;
    rhs = op.rhs_with_load(pen.load);
  };
  if (state) update_state_sets(prob, *state, gamma, res.y, sets);
  linearize();
  if (box) {
    res.lambda = lambda0 ? *lambda0 : BoundaryVector(rhs - op.apply(res.u));
    ActiveSets cs = control_active_sets(res.u, res.lambda, *box, c);
    sets.upper = std::move(cs.upper);
    sets.lower = std::move(cs.lower);
    res.overlaps += cs.overlaps;
  }

  const int max_iter = state ? options.newton_max : box ? options.pdas_max : 1;
  for (int k = 1; k <= max_iter; ++k) {
    // Fix the active controls at their bounds and solve on the free block.
    BoundaryVector u = res.u;
    for (Index a : sets.upper) u[a] = box->upper[a];
    for (Index a : sets.lower) u[a] = box->lower[a];
    const std::vector<Index> free = box ? sets.free(nb) : std::vector<Index>();
    if (!box) {
      const PcgResult r = pcg(op.as_operator(), rhs, &prob.preconditioner(), u,
                              {options.pcg_rel_tol, options.pcg_max_iter});
      if (!r.converged) throw Error("pcg did not converge in the Newton step");
      u = r.x;
      res.pcg += r.iterations;
    } else if (!free.empty()) {
      BoundaryVector fixed_part = u;
      for (Index i : free) fixed_part[i] = 0.0;
      const Vector free_rhs = gather(Vector(rhs - op.apply(fixed_part)), free);
      const SpdSolver prec = spd_factorize(submatrix(prob.preconditioner_matrix(), free, free));
      const LinearOperator block{static_cast<Index>(free.size()), [&](const Vector& v) {
                                   BoundaryVector full = BoundaryVector::Zero(nb);
                                   for (std::size_t i = 0; i < free.size(); ++i) full[free[i]] = v[i];
                                   return gather(op.apply(full), free);
                                 }};
      const PcgResult r = pcg(block, free_rhs, &prec, gather(u, free),
                              {options.pcg_rel_tol, options.pcg_max_iter});
      if (!r.converged) throw Error("pcg did not converge in the Newton step");
      for (std::size_t i = 0; i < free.size(); ++i) u[free[i]] = r.x[i];
      res.pcg += r.iterations;
    }
    res.newton = k;
    res.u = u;
    res.y = prob.apply_S(u);
    if (box) {
      res.lambda = rhs - op.apply(u);
      for (Index i : free) res.lambda[i] = 0.0;
    }

    ActiveSets next;
    next.c = c;
    bool state_done = true;
    if (state) {
      res.multiplier_residual = multiplier_change(prob, *state, gamma, res.y, sets);
      update_state_sets(prob, *state, gamma, res.y, next);
      state_done = next.same_state(sets) || (!box && res.multiplier_residual < eps_lambda);
    }
    bool control_done = true;
    if (box) {
      ActiveSets cs = control_active_sets(res.u, res.lambda, *box, c);
      next.upper = std::move(cs.upper);
      next.lower = std::move(cs.lower);
      res.overlaps += cs.overlaps;
      control_done = next.same_control(sets);
    }
    if (!box && !state) {
      res.converged = true;
      break;
    }
    if (state_done && control_done) {
      res.converged = true;
      if (!state || next.same_state(sets)) break;
      // Stopped on the multiplier residual: report the sets at the new state.
      sets = std::move(next);
      break;
    }
    sets = std::move(next);
    linearize();
  }
  res.sets = std::move(sets);
  if (!box) res.lambda = BoundaryVector::Zero(nb);
  return res;
}

}  // namespace

PenaltyLinearization penalty_linearization(const DiscreteProblem& prob, const StateData& state,
                                           double gamma, const ActiveSets& sets) {
  const Vector& l = prob.fem().lumped_omega;
  PenaltyLinearization pen;
  pen.gamma = gamma;
  pen.h = FieldVector::Zero(prob.sets().num_nodes());
  pen.load = FieldVector::Zero(prob.sets().num_nodes());
  for (Index j : sets.omega_upper) {
    pen.h[j] = l[j];
    pen.load[j] = l[j] * (gamma * state.upper[j] - state.shift[j]);
  }
  for (Index j : sets.omega_lower) {
    pen.h[j] = l[j];
    pen.load[j] = l[j] * (gamma * state.lower[j] + state.lower_shift[j]);
  }
  return pen;
}

LevelResult solve_control_constrained(const DiscreteProblem& prob, const BoxBounds& bounds,
                                      const BoundaryVector* u0, const BoundaryVector* lambda0,
                                      const SolverOptions& options) {
  return newton_loop(prob, &bounds, nullptr, 0.0, u0, lambda0, options);
}

LevelResult solve_penalized(const DiscreteProblem& prob, const StateData& state, double gamma,
                            const BoundaryVector* u0, const SolverOptions& options) {
  return newton_loop(prob, nullptr, &state, gamma, u0, nullptr, options);
}

LevelResult solve_penalized_box(const DiscreteProblem& prob, const BoxBounds& bounds,
                                const StateData& state, double gamma, const BoundaryVector* u0,
                                const SolverOptions& options) {
  return newton_loop(prob, &bounds, &state, gamma, u0, nullptr, options);
}

double multiplier_residual_rd(const DiscreteProblem& prob, const StateData& state,
                              const FieldVector& y, const ActiveSets& sets) {
  const Vector& l = prob.fem().lumped_omega;
  double rd = 0;
  for (Index j : sets.omega_upper) rd += l[j] * (y[j] - state.upper[j]);
  for (Index j : sets.omega_lower) rd += l[j] * (state.lower[j] - y[j]);
  return rd;
}

double max_constraint_violation(const DiscreteProblem& prob, const StateData& state,
                                const FieldVector& y) {
  double mcv = 0;
  for (Index j : prob.sets().omega) {
    mcv = std::max(mcv, y[j] - state.upper[j]);
    if (state.has_lower) mcv = std::max(mcv, state.lower[j] - y[j]);
  }
  return mcv;
}

std::vector<MultiplierWeight> recover_multiplier(const DiscreteProblem& prob, const StateData& state,
                                                 const FieldVector& y, double gamma) {
  const Vector& l = prob.fem().lumped_omega;
  std::vector<MultiplierWeight> out;
  for (Index j : state_active_set(y, gamma, state.shift, state.upper, prob.sets()))
    out.push_back({j, l[j] * (state.shift[j] + gamma * (y[j] - state.upper[j]))});
  if (state.has_lower) {
    for (Index j : state_active_set(-y, gamma, state.lower_shift, -state.lower, prob.sets()))
      out.push_back({j, -l[j] * (state.lower_shift[j] + gamma * (state.lower[j] - y[j]))});
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.node < b.node; });
  }
  return out;
}

}  // namespace dck
