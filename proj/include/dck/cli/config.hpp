#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dck/solvers.hpp"

namespace dck::cli {

/// Flat run description. Every field has a JSON key of the same name; presets
/// fill it first, then the config file, then command-line flags.
struct RunConfig {
  std::string preset;

  std::string domain = "pentagon";  // pentagon | cube
  int level_min = 1;
  int level_max = 1;
  double nu = 1.0;
  std::vector<double> nu_sweep;  // one run per value when non-empty

  std::string target = "constant";  // constant | squared_norm | split
  double target_value = 1.0;
  int target_split_axis = 0;
  double target_split_at = 0.25;
  double target_below = -1.0;
  double target_above = 1.0;

  std::optional<double> control_lower;
  std::optional<double> control_upper;

  std::optional<double> state_upper;
  std::optional<double> state_lower;
  std::vector<double> state_center{-0.1, -0.1};
  double state_radius = 0.2;
  double shift = 0.0;
  double lower_shift = 0.0;

  double gamma0 = 1.0;
  double tau = 10.0;
  double gamma_max = 0.0;
  double rd_constant = 1.0;
  double e_inf = 0.0;
  int n_max = 30;
  std::optional<double> fixed_gamma;
  std::vector<double> gamma_ladder;

  double pcg_rel_tol = 1e-10;
  int pcg_max_iter = 5000;
  double eps_lambda = -1.0;
  int newton_max = 40;
  int pdas_max = 50;
  double complementarity = 0.0;
  std::string method = "reduced_pcg";  // reduced_pcg | kkt_direct
  bool nested_warm_start = true;

  std::string out = "out";
  bool csv = true;
  bool vtk = false;
  unsigned seed = 1;
};

const std::vector<std::string>& preset_names();

/// Throws ConfigError for an unknown name.
RunConfig make_preset(const std::string& name);

/// Applies the keys of a flat JSON object. A "preset" key is applied first.
/// Unknown keys and ill-typed values throw ConfigError.
void apply_json(RunConfig& config, const nlohmann::json& object);

/// Parses "a..b" (or a single level "a").
std::pair<int, int> parse_levels(const std::string& text);

/// Checks the combination of settings; throws ConfigError.
void validate(const RunConfig& config);

/// Problem description for one Tikhonov weight.
ProblemSpec to_problem_spec(const RunConfig& config, double nu);

/// The weights to run: the sweep if present, else the single nu.
std::vector<double> nu_values(const RunConfig& config);

}  // namespace dck::cli
