#include "dck/cli/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>

namespace dck::cli {

namespace {

using nlohmann::json;

RunConfig pentagon_base(int level_min, int level_max) {
  RunConfig c;
  c.domain = "pentagon";
  c.level_min = level_min;
  c.level_max = level_max;
  return c;
}

RunConfig state_base() {
  RunConfig c = pentagon_base(2, 8);
  c.state_upper = 0.15;
  c.state_center = {-0.1, -0.1};
  c.state_radius = 0.2;
  c.gamma0 = 1.0;
  c.tau = 10.0;
  c.gamma_max = 1e9;
  return c;
}

const std::map<std::string, std::function<RunConfig()>>& preset_table() {
  static const std::map<std::string, std::function<RunConfig()>> table = {
      {"ex31-2d",
       [] {
         RunConfig c = pentagon_base(1, 8);
         c.nested_warm_start = false;
         return c;
       }},
      {"ex32-nusweep",
       [] {
         RunConfig c = pentagon_base(5, 7);
         c.target = "squared_norm";
         c.nu_sweep = {1e4, 1e2, 1.0, 1e-2, 1e-4, 1e-6, 0.0};
         c.nested_warm_start = false;
         return c;
       }},
      {"ex3d",
       [] {
         RunConfig c;
         c.domain = "cube";
         c.level_min = 4;
         c.level_max = 5;
         c.nested_warm_start = false;
         return c;
       }},
      {"cc-2d",
       [] {
         RunConfig c = pentagon_base(1, 8);
         c.control_upper = 0.16;
         c.nested_warm_start = false;
         return c;
       }},
      {"cc-3d",
       [] {
         RunConfig c;
         c.domain = "cube";
         c.level_min = 2;
         c.level_max = 4;
         c.control_upper = 0.16;
         c.nested_warm_start = false;
         return c;
       }},
      {"nu0-bangbang",
       [] {
         RunConfig c = pentagon_base(2, 8);
         c.nu = 0.0;
         c.target = "split";
         c.target_split_axis = 0;
         c.target_split_at = 0.25;
         c.target_below = -1.0;
         c.target_above = 1.0;
         c.control_lower = -1.2;
         c.control_upper = 0.16;
         return c;
       }},
      {"sc-2d", [] { return state_base(); }},
      {"sc-direct-gamma",
       [] {
         RunConfig c = state_base();
         c.level_min = 7;
         c.fixed_gamma = 1e9;
         c.nested_warm_start = false;
         return c;
       }},
      {"cs-2d",
       [] {
         RunConfig c = state_base();
         c.control_upper = 0.16;
         c.gamma_max = 1e8;
         return c;
       }},
      {"multiplier-zoom",
       [] {
         RunConfig c = state_base();
         c.gamma_ladder = {1e10, 1e11, 1e12, 1e13, 1e14, 1e15};
         return c;
       }},
  };
  return table;
}

template <class T>
T get_as(const json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

double get_number(const json& value, const std::string& key) {
  if (!value.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return value.get<double>();
}

int get_int(const json& value, const std::string& key) {
  if (!value.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
  return value.get<int>();
}

std::optional<double> get_optional(const json& value, const std::string& key) {
  if (value.is_null()) return std::nullopt;
  return get_number(value, key);
}

std::vector<double> get_numbers(const json& value, const std::string& key) {
  if (!value.is_array()) throw ConfigError("config key '" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const json& item : value) out.push_back(get_number(item, key));
  return out;
}

using Setter = std::function<void(RunConfig&, const json&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"domain", [](RunConfig& c, const json& v, const std::string& k) { c.domain = get_as<std::string>(v, k); }},
      {"level_min", [](RunConfig& c, const json& v, const std::string& k) { c.level_min = get_int(v, k); }},
      {"level_max", [](RunConfig& c, const json& v, const std::string& k) { c.level_max = get_int(v, k); }},
      {"levels",
       [](RunConfig& c, const json& v, const std::string& k) {
         std::tie(c.level_min, c.level_max) = parse_levels(get_as<std::string>(v, k));
       }},
      {"nu", [](RunConfig& c, const json& v, const std::string& k) { c.nu = get_number(v, k); }},
      {"nu_sweep", [](RunConfig& c, const json& v, const std::string& k) { c.nu_sweep = get_numbers(v, k); }},
      {"target", [](RunConfig& c, const json& v, const std::string& k) { c.target = get_as<std::string>(v, k); }},
      {"target_value", [](RunConfig& c, const json& v, const std::string& k) { c.target_value = get_number(v, k); }},
      {"target_split_axis",
       [](RunConfig& c, const json& v, const std::string& k) { c.target_split_axis = get_int(v, k); }},
      {"target_split_at",
       [](RunConfig& c, const json& v, const std::string& k) { c.target_split_at = get_number(v, k); }},
      {"target_below", [](RunConfig& c, const json& v, const std::string& k) { c.target_below = get_number(v, k); }},
      {"target_above", [](RunConfig& c, const json& v, const std::string& k) { c.target_above = get_number(v, k); }},
      {"control_lower",
       [](RunConfig& c, const json& v, const std::string& k) { c.control_lower = get_optional(v, k); }},
      {"control_upper",
       [](RunConfig& c, const json& v, const std::string& k) { c.control_upper = get_optional(v, k); }},
      {"state_upper", [](RunConfig& c, const json& v, const std::string& k) { c.state_upper = get_optional(v, k); }},
      {"state_lower", [](RunConfig& c, const json& v, const std::string& k) { c.state_lower = get_optional(v, k); }},
      {"state_center",
       [](RunConfig& c, const json& v, const std::string& k) { c.state_center = get_numbers(v, k); }},
      {"state_radius", [](RunConfig& c, const json& v, const std::string& k) { c.state_radius = get_number(v, k); }},
      {"shift", [](RunConfig& c, const json& v, const std::string& k) { c.shift = get_number(v, k); }},
      {"lower_shift", [](RunConfig& c, const json& v, const std::string& k) { c.lower_shift = get_number(v, k); }},
      {"gamma0", [](RunConfig& c, const json& v, const std::string& k) { c.gamma0 = get_number(v, k); }},
      {"tau", [](RunConfig& c, const json& v, const std::string& k) { c.tau = get_number(v, k); }},
      {"gamma_max", [](RunConfig& c, const json& v, const std::string& k) { c.gamma_max = get_number(v, k); }},
      {"rd_constant", [](RunConfig& c, const json& v, const std::string& k) { c.rd_constant = get_number(v, k); }},
      {"e_inf", [](RunConfig& c, const json& v, const std::string& k) { c.e_inf = get_number(v, k); }},
      {"n_max", [](RunConfig& c, const json& v, const std::string& k) { c.n_max = get_int(v, k); }},
      {"fixed_gamma", [](RunConfig& c, const json& v, const std::string& k) { c.fixed_gamma = get_optional(v, k); }},
      {"gamma_ladder",
       [](RunConfig& c, const json& v, const std::string& k) { c.gamma_ladder = get_numbers(v, k); }},
      {"pcg_rel_tol", [](RunConfig& c, const json& v, const std::string& k) { c.pcg_rel_tol = get_number(v, k); }},
      {"pcg_max_iter", [](RunConfig& c, const json& v, const std::string& k) { c.pcg_max_iter = get_int(v, k); }},
      {"eps_lambda", [](RunConfig& c, const json& v, const std::string& k) { c.eps_lambda = get_number(v, k); }},
      {"newton_max", [](RunConfig& c, const json& v, const std::string& k) { c.newton_max = get_int(v, k); }},
      {"pdas_max", [](RunConfig& c, const json& v, const std::string& k) { c.pdas_max = get_int(v, k); }},
      {"complementarity",
       [](RunConfig& c, const json& v, const std::string& k) { c.complementarity = get_number(v, k); }},
      {"method", [](RunConfig& c, const json& v, const std::string& k) { c.method = get_as<std::string>(v, k); }},
      {"nested_warm_start",
       [](RunConfig& c, const json& v, const std::string& k) { c.nested_warm_start = get_as<bool>(v, k); }},
      {"out", [](RunConfig& c, const json& v, const std::string& k) { c.out = get_as<std::string>(v, k); }},
      {"csv", [](RunConfig& c, const json& v, const std::string& k) { c.csv = get_as<bool>(v, k); }},
      {"vtk", [](RunConfig& c, const json& v, const std::string& k) { c.vtk = get_as<bool>(v, k); }},
      {"seed", [](RunConfig& c, const json& v, const std::string& k) { c.seed = get_as<unsigned>(v, k); }},
  };
  return table;
}

int parse_int(std::string_view text) {
  int value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size())
    throw ConfigError("invalid level '" + std::string(text) + "'");
  return value;
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, make] : preset_table()) out.push_back(name);
    return out;
  }();
  return names;
}

RunConfig make_preset(const std::string& name) {
  const auto it = preset_table().find(name);
  if (it == preset_table().end()) throw ConfigError("unknown preset '" + name + "'");
  RunConfig c = it->second();
  c.preset = name;
  return c;
}

void apply_json(RunConfig& config, const json& object) {
  if (!object.is_object()) throw ConfigError("config must be a JSON object");
  if (object.contains("preset")) {
    const RunConfig base = make_preset(get_as<std::string>(object.at("preset"), "preset"));
    config = base;
  }
  for (const auto& [key, value] : object.items()) {
    if (key == "preset") continue;
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(config, value, key);
  }
}

std::pair<int, int> parse_levels(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) {
    const int level = parse_int(text);
    return {level, level};
  }
  return {parse_int(std::string_view(text).substr(0, dots)),
          parse_int(std::string_view(text).substr(dots + 2))};
}

void validate(const RunConfig& c) {
  const auto fail = [](const std::string& why) { throw ConfigError(why); };
  if (c.domain != "pentagon" && c.domain != "cube") fail("domain must be 'pentagon' or 'cube'");
  const int dim = c.domain == "cube" ? 3 : 2;
  if (c.level_min < 1 || c.level_max < c.level_min) fail("levels must satisfy 1 <= level_min <= level_max");
  if (c.level_max > 12) fail("level_max above 12 is not supported");
  for (double nu : nu_values(c))
    if (!(nu >= 0) || !std::isfinite(nu)) fail("nu must be finite and non-negative");
  if (c.target != "constant" && c.target != "squared_norm" && c.target != "split")
    fail("target must be 'constant', 'squared_norm' or 'split'");
  if (c.target_split_axis < 0 || c.target_split_axis >= dim) fail("target_split_axis out of range");
  if (c.control_lower && c.control_upper && !(*c.control_lower < *c.control_upper))
    fail("control_lower must be below control_upper");
  const bool has_state = c.state_upper.has_value();
  if (c.state_lower && !has_state) fail("state_lower needs state_upper");
  if (c.state_lower && !(*c.state_lower < *c.state_upper)) fail("state_lower must be below state_upper");
  if (has_state) {
    if (c.state_center.size() != static_cast<std::size_t>(dim)) fail("state_center needs one entry per dimension");
    if (!(c.state_radius > 0)) fail("state_radius must be positive");
    if (!(c.gamma0 > 0)) fail("gamma0 must be positive");
    if (!(c.tau > 1)) fail("tau must exceed 1");
    if (c.gamma_max < 0) fail("gamma_max must be non-negative");
    if (c.n_max < 1) fail("n_max must be positive");
  } else if (c.fixed_gamma || !c.gamma_ladder.empty()) {
    fail("fixed_gamma and gamma_ladder need a state bound");
  }
  if (c.fixed_gamma && !(*c.fixed_gamma > 0)) fail("fixed_gamma must be positive");
  for (double g : c.gamma_ladder)
    if (!(g > 0)) fail("gamma_ladder entries must be positive");
  if (!(c.pcg_rel_tol > 0)) fail("pcg_rel_tol must be positive");
  if (c.pcg_max_iter < 1 || c.newton_max < 1 || c.pdas_max < 1) fail("iteration caps must be positive");
  if (c.method != "reduced_pcg" && c.method != "kkt_direct") fail("method must be 'reduced_pcg' or 'kkt_direct'");
}

std::vector<double> nu_values(const RunConfig& c) {
  return c.nu_sweep.empty() ? std::vector<double>{c.nu} : c.nu_sweep;
}

ProblemSpec to_problem_spec(const RunConfig& c, double nu) {
  validate(c);
  ProblemSpec spec;
  spec.domain = c.domain == "cube" ? Domain::Cube : Domain::Pentagon;
  spec.level_min = c.level_min;
  spec.level_max = c.level_max;
  spec.nu = nu;
  if (c.target == "squared_norm")
    spec.target = ScalarField::squared_norm();
  else if (c.target == "split")
    spec.target = ScalarField::split(c.target_split_axis, c.target_split_at, c.target_below, c.target_above);
  else
    spec.target = ScalarField::constant(c.target_value);
  if (c.control_lower || c.control_upper) {
    ControlBounds bounds;
    if (c.control_lower) bounds.lower = ScalarField::constant(*c.control_lower);
    if (c.control_upper) bounds.upper = ScalarField::constant(*c.control_upper);
    spec.control = bounds;
  }
  if (c.state_upper) {
    StateBound bound;
    for (std::size_t i = 0; i < c.state_center.size(); ++i) bound.region.center[i] = c.state_center[i];
    bound.region.radius = c.state_radius;
    bound.upper = ScalarField::constant(*c.state_upper);
    bound.shift = ScalarField::constant(c.shift);
    if (c.state_lower) {
      bound.lower = ScalarField::constant(*c.state_lower);
      bound.lower_shift = ScalarField::constant(c.lower_shift);
    }
    spec.state = bound;
  }
  spec.continuation = {c.gamma0, c.tau, c.gamma_max, c.rd_constant, c.e_inf, c.n_max};
  spec.solver = {c.pcg_rel_tol, c.pcg_max_iter, c.eps_lambda, c.newton_max, c.pdas_max, c.complementarity};
  spec.method = c.method == "kkt_direct" ? UnconstrainedMethod::KktDirect : UnconstrainedMethod::ReducedPcg;
  spec.nested_warm_start = c.nested_warm_start;
  spec.fixed_gamma = c.fixed_gamma;
  spec.gamma_ladder = c.gamma_ladder;
  return spec;
}

}  // namespace dck::cli
