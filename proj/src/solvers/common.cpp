#include <algorithm>
#include <cmath>

#include "dck/solvers.hpp"

namespace dck {

Mesh build_domain_mesh(Domain domain, int level) {
  if (level < 0 || level > 12) throw std::invalid_argument("mesh level out of range");
  const int n = 1 << level;
  if (domain == Domain::Pentagon) {
    if (level < 1) throw std::invalid_argument("pentagon meshes need level >= 1");
    return build_pentagon_mesh(n);
  }
  return build_cube_mesh(n);
}

ProblemLadder::ProblemLadder(const ProblemSpec& spec) : spec_(spec) {
  if (spec_.level_max < spec_.level_min) throw std::invalid_argument("empty level range");
  if (spec_.state) omega_ = closed_ball(spec_.state->region.center, spec_.state->region.radius);
  auto base = std::make_shared<const Mesh>(build_domain_mesh(spec_.domain, spec_.level_min));
  meshes_.push_back(base);
  for (int l = spec_.level_min + 1; l <= spec_.level_max; ++l)
    meshes_.push_back(std::make_shared<const Mesh>(refine_uniform(*meshes_.back())));
  problems_.resize(meshes_.size());
}

std::shared_ptr<const DiscreteProblem> ProblemLadder::problem(int j) {
  auto& slot = problems_.at(j);
  if (!slot) slot = std::make_shared<const DiscreteProblem>(meshes_[j], omega_, spec_.nu, spec_.target);
  return slot;
}

void ProblemLadder::release_below(int j) {
  for (int k = 0; k < j && k < num_levels(); ++k) problems_[k].reset();
}

std::vector<Index> ActiveSets::free(Index num_boundary) const {
  std::vector<char> fixed(num_boundary, 0);
  for (Index k : upper) fixed[k] = 1;
  for (Index k : lower) fixed[k] = 1;
  std::vector<Index> out;
  for (Index k = 0; k < num_boundary; ++k)
    if (!fixed[k]) out.push_back(k);
  return out;
}

namespace {

Vector evaluate_on(const Mesh& mesh, const std::vector<Index>& nodes, const ScalarField& field,
                   double fallback, Index length, bool scatter) {
  Vector out = Vector::Constant(length, fallback);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const Index slot = scatter ? nodes[k] : static_cast<Index>(k);
    out[slot] = field ? field(mesh.node(nodes[k])) : fallback;
  }
  return out;
}

}  // namespace

BoxBounds box_bounds(const DiscreteProblem& prob, const ControlBounds& bounds) {
  const auto& b = prob.sets().boundary;
  const double inf = std::numeric_limits<double>::infinity();
  BoxBounds box{evaluate_on(prob.mesh(), b, bounds.lower, -inf, prob.num_boundary(), false),
                evaluate_on(prob.mesh(), b, bounds.upper, inf, prob.num_boundary(), false)};
  for (Index k = 0; k < prob.num_boundary(); ++k)
    if (!(box.lower[k] < box.upper[k])) throw std::invalid_argument("control bounds need lower < upper");
  return box;
}

StateData state_data(const DiscreteProblem& prob, const StateBound& bound) {
  if (!bound.upper) throw std::invalid_argument("state constraint needs an upper bound");
  const auto& omega = prob.sets().omega;
  const Index n = prob.sets().num_nodes();
  const double inf = std::numeric_limits<double>::infinity();
  StateData s;
  s.upper = evaluate_on(prob.mesh(), omega, bound.upper, inf, n, true);
  s.shift = evaluate_on(prob.mesh(), omega, bound.shift, 0.0, n, true);
  if (bound.lower) {
    s.has_lower = true;
    s.lower = evaluate_on(prob.mesh(), omega, bound.lower, -inf, n, true);
    s.lower_shift = evaluate_on(prob.mesh(), omega, bound.lower_shift, 0.0, n, true);
    for (Index j : omega)
      if (!(s.lower[j] < s.upper[j])) throw std::invalid_argument("state bounds need lower < upper");
  }
  return s;
}

}  // namespace dck
