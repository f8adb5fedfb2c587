#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dck/operator.hpp"

namespace dck {

enum class Domain { Pentagon, Cube };
enum class UnconstrainedMethod { ReducedPcg, KktDirect };

struct Ball {
  Point center{0, 0, 0};
  double radius = 0.0;
};

/// Pointwise control bounds on the boundary. An empty field means no bound.
struct ControlBounds {
  ScalarField lower;
  ScalarField upper;
};

/// State constraint y <= upper (and optionally y >= lower) on the closed ball.
/// The shifts default to zero.
struct StateBound {
  Ball region;
  ScalarField upper;
  ScalarField lower;
  ScalarField shift;
  ScalarField lower_shift;
};

struct ContinuationOptions {
  double gamma0 = 1.0;
  double tau = 10.0;
  /// Penalty ceiling; 0 means none. When set, gamma is capped at this value
  /// and the continuation only stops once it has been reached.
  double gamma_max = 0.0;
  double rd_constant = 1.0;
  double e_inf = 0.0;
  int n_max = 30;
};

struct SolverOptions {
  double pcg_rel_tol = 1e-10;
  int pcg_max_iter = 5000;
  /// Multiplier-residual tolerance; negative means 1e-10 sqrt(|Omega|).
  double eps_lambda = -1.0;
  int newton_max = 40;
  int pdas_max = 50;
  /// Complementarity parameter; non-positive means nu (or 1 when nu = 0).
  double complementarity = 0.0;
};

struct ProblemSpec {
  Domain domain = Domain::Pentagon;
  /// Level l has mesh size 2^-l.
  int level_min = 1;
  int level_max = 1;
  double nu = 1.0;
  ScalarField target = ScalarField::constant(1.0);
  std::optional<ControlBounds> control;
  std::optional<StateBound> state;
  ContinuationOptions continuation;
  SolverOptions solver;
  UnconstrainedMethod method = UnconstrainedMethod::ReducedPcg;
  bool nested_warm_start = true;
  /// Solve the penalized problem directly at this gamma on every level.
  std::optional<double> fixed_gamma;
  /// Extra penalties solved on the finest level after the continuation.
  std::vector<double> gamma_ladder;
};

/// Nested mesh hierarchy for a problem description with lazily built discrete problems.
class ProblemLadder {
 public:
  explicit ProblemLadder(const ProblemSpec& spec);

  int num_levels() const { return static_cast<int>(meshes_.size()); }
  int level(int j) const { return spec_.level_min + j; }
  std::shared_ptr<const Mesh> mesh(int j) const { return meshes_.at(j); }
  /// Builds (and caches) the discrete problem of ladder index j.
  std::shared_ptr<const DiscreteProblem> problem(int j);
  /// Drops cached problems coarser than j.
  void release_below(int j);
  const ProblemSpec& spec() const { return spec_; }

 private:
  ProblemSpec spec_;
  RegionPredicate omega_;
  std::vector<std::shared_ptr<const Mesh>> meshes_;
  std::vector<std::shared_ptr<const DiscreteProblem>> problems_;
};

/// Mesh for the given domain and level (h = 2^-level).
Mesh build_domain_mesh(Domain domain, int level);

struct ActiveSets {
  std::vector<Index> upper;        // positions into the boundary list
  std::vector<Index> lower;
  std::vector<Index> omega_upper;  // node indices in omega
  std::vector<Index> omega_lower;
  double c = 1.0;
  int overlaps = 0;  // nodes that tested active for both control bounds

  std::vector<Index> free(Index num_boundary) const;
  bool same_control(const ActiveSets& o) const { return upper == o.upper && lower == o.lower; }
  bool same_state(const ActiveSets& o) const {
    return omega_upper == o.omega_upper && omega_lower == o.omega_lower;
  }
};

/// Control bounds evaluated at the boundary nodes (+-inf where absent).
struct BoxBounds {
  BoundaryVector lower;
  BoundaryVector upper;
};
BoxBounds box_bounds(const DiscreteProblem& prob, const ControlBounds& bounds);

/// State bound data evaluated at the nodes (only omega entries matter).
struct StateData {
  FieldVector upper;
  FieldVector shift;
  bool has_lower = false;
  FieldVector lower;
  FieldVector lower_shift;
};
StateData state_data(const DiscreteProblem& prob, const StateBound& bound);

struct ReportRow {
  int level = 0;
  double h = 0.0;
  Index num_nodes = 0;
  Index num_interior = 0;
  Index num_boundary = 0;
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double nu = 0.0;
  int newton = 0;
  int pcg = 0;
  Index num_active = 0;
  Index num_active_omega = 0;
  double J = 0.0;
  double r_d = std::numeric_limits<double>::quiet_NaN();
  double mcv = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
  bool converged = true;
};

struct MultiplierWeight {
  Index node;
  double weight;
};

struct SolverReport {
  std::vector<ReportRow> rows;
  /// Active state-bound nodes of each row (empty without a state bound).
  std::vector<std::vector<Index>> row_active_omega;
  BoundaryVector u;
  FieldVector y;
  BoundaryVector lambda;
  std::vector<MultiplierWeight> multiplier;
  bool converged = true;
  std::string message;
  int overlap_resolutions = 0;
  std::shared_ptr<const DiscreteProblem> problem;  // problem the final iterate lives on
};

/// Result of one solve on a fixed mesh.
struct LevelResult {
  BoundaryVector u;
  FieldVector y;
  BoundaryVector lambda;
  ActiveSets sets;
  int newton = 0;
  int pcg = 0;
  bool converged = false;
  int overlaps = 0;
  double multiplier_residual = 0.0;
};

/// Reduced PCG with preconditioner M_BB + nu B_BB, or the assembled KKT system.
LevelResult solve_unconstrained(const DiscreteProblem& prob, UnconstrainedMethod method,
                                const BoundaryVector* u0 = nullptr, const SolverOptions& options = {});

/// upper = {lambda + c(u - beta) > 0}, lower = {lambda + c(u - alpha) < 0}.
/// A node in both goes to the bound with the larger violation.
ActiveSets control_active_sets(const BoundaryVector& u, const BoundaryVector& lambda,
                               const BoxBounds& bounds, double c);

/// Primal-dual active set (semismooth Newton) for the box-constrained problem.
/// Defaults: u0 = 0, lambda0 = f - A u0.
LevelResult solve_control_constrained(const DiscreteProblem& prob, const BoxBounds& bounds,
                                      const BoundaryVector* u0 = nullptr,
                                      const BoundaryVector* lambda0 = nullptr,
                                      const SolverOptions& options = {});

/// {j in omega : shift_j + gamma (y_j - bound_j) > 0}.
std::vector<Index> state_active_set(const FieldVector& y, double gamma, const FieldVector& shift,
                                    const FieldVector& bound, const IndexSets& sets);

/// Penalty linearization (H and affine load) for the given active nodes.
PenaltyLinearization penalty_linearization(const DiscreteProblem& prob, const StateData& state,
                                           double gamma, const ActiveSets& sets);

/// Semismooth Newton for the Moreau-Yosida penalized problem at fixed gamma.
LevelResult solve_penalized(const DiscreteProblem& prob, const StateData& state, double gamma,
                            const BoundaryVector* u0 = nullptr, const SolverOptions& options = {});

/// Semismooth Newton with both control bounds and the penalized state bound.
LevelResult solve_penalized_box(const DiscreteProblem& prob, const BoxBounds& bounds,
                                const StateData& state, double gamma,
                                const BoundaryVector* u0 = nullptr,
                                const SolverOptions& options = {});

/// Sum over the active nodes of L_jj (y_j - b_j) (and L_jj (a_j - y_j) below).
double multiplier_residual_rd(const DiscreteProblem& prob, const StateData& state,
                              const FieldVector& y, const ActiveSets& sets);
/// Largest nodal violation over omega, at least 0.
double max_constraint_violation(const DiscreteProblem& prob, const StateData& state,
                                const FieldVector& y);

/// Weights L_jj (shift_j + gamma (y_j - b_j)) on the active nodes (negative
/// for the lower bound).
std::vector<MultiplierWeight> recover_multiplier(const DiscreteProblem& prob, const StateData& state,
                                                 const FieldVector& y, double gamma);

/// Continuation in gamma with nested meshes for the state-constrained problem.
SolverReport solve_state_constrained(ProblemLadder& ladder);
/// Same control flow with control bounds as well.
SolverReport solve_control_state(ProblemLadder& ladder);
/// Runs whatever the problem description asks for over its level ladder.
SolverReport solve_ladder(ProblemLadder& ladder);

}  // namespace dck
