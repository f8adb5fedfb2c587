#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dck/cli/config.hpp"
#include "dck/cli/run.hpp"
#include "dck/cli/verify.hpp"

namespace {

using namespace dck::cli;

RunConfig load_config(const std::string& path, const std::string& preset, const std::string& levels,
                      const std::string& out, bool vtk) {
  nlohmann::json object = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw dck::ConfigError("cannot open config file '" + path + "'");
    try {
      object = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw dck::ConfigError(std::string("invalid JSON: ") + e.what());
    }
    if (!object.is_object()) throw dck::ConfigError("config must be a JSON object");
  }
  if (!preset.empty()) object["preset"] = preset;
  if (path.empty() && preset.empty()) throw dck::ConfigError("solve needs --config or --preset");

  RunConfig config;
  apply_json(config, object);
  if (!levels.empty()) std::tie(config.level_min, config.level_max) = parse_levels(levels);
  if (!out.empty()) config.out = out;
  if (vtk) config.vtk = true;
  validate(config);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite element solver for Dirichlet boundary control problems"};
  app.require_subcommand(1);

  std::string config_path, preset, levels, out;
  bool vtk = false;
  CLI::App* solve = app.add_subcommand("solve", "Solve a preset or configured problem over a mesh ladder");
  solve->add_option("--config", config_path, "Flat JSON config file");
  solve->add_option("--preset", preset, "Preset name (overrides the file)");
  solve->add_option("--levels", levels, "Mesh levels a..b, level l has h = 2^-l");
  solve->add_option("--out", out, "Output directory");
  solve->add_flag("--vtk", vtk, "Write VTK fields of the final solution");

  VerifyOptions verify_options;
  CLI::App* verify = app.add_subcommand("verify", "Run the property suite on small meshes");
  verify->add_flag("--quick", verify_options.quick, "Smaller meshes and fewer probes");
  verify->add_option("--seed", verify_options.seed, "Seed of the random probes");
  verify->add_option("--threads", verify_options.threads, "Worker threads (default DCK_THREADS)");
  verify->add_flag("--corrupt-boundary-mass", verify_options.corrupt_boundary_mass,
                   "Fault injection: scale the assembled boundary mass by 1.01");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfigError;
  }

  if (*verify) {
    const auto results = run_verify(verify_options);
    return print_verify(std::cout, results) ? kExitOk : kExitFailure;
  }

  RunConfig config;
  try {
    config = load_config(config_path, preset, levels, out, vtk);
  } catch (const dck::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  }
  std::cout << csv_header() << '\n';
  const RunOutcome outcome = run(config, std::cout);
  if (outcome.exit_code != kExitOk) std::cerr << "error: " << outcome.message << '\n';
  return outcome.exit_code;
}
