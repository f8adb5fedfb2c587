#include "dck/solvers.hpp"

namespace dck {

LevelResult solve_unconstrained(const DiscreteProblem& prob, UnconstrainedMethod method,
                                const BoundaryVector* u0, const SolverOptions& options) {
  LevelResult res;
  if (method == UnconstrainedMethod::KktDirect) {
    const KktSolution sol = solve_kkt(prob, assemble_kkt(prob));
    res.u = sol.u;
    res.y = sol.y;
    res.converged = true;
  } else {
    const Vector x0 = u0 ? *u0 : Vector::Zero(prob.num_boundary());
    const PcgResult r = pcg(prob.reduced_operator(), prob.f(), &prob.preconditioner(), x0,
                            {options.pcg_rel_tol, options.pcg_max_iter});
    res.u = r.x;
    res.y = prob.apply_S(res.u);
    res.pcg = r.iterations;
    res.converged = r.converged;
  }
  res.lambda = BoundaryVector::Zero(prob.num_boundary());
  return res;
}

}  // namespace dck
