#include "dck/cli/run.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

namespace dck::cli {

namespace {

std::string format(const char* pattern, double value) {
  if (std::isnan(value)) return "";
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, pattern, value);
  return buffer;
}

std::string vtk_path(const RunConfig& config, std::size_t k, std::size_t count) {
  const std::string name = count == 1 ? "solution.vtk" : "solution_nu" + std::to_string(k) + ".vtk";
  return (std::filesystem::path(config.out) / name).string();
}

}  // namespace

std::string csv_header() {
  return "level,h,N,N_I,N_B,nu,gamma,newton,pcg,N_A,N_Aw,J,r_d,mcv,seconds";
}

std::string csv_line(const ReportRow& row) {
  std::string line = std::to_string(row.level);
  line += "," + format("%.10g", row.h);
  line += "," + std::to_string(row.num_nodes);
  line += "," + std::to_string(row.num_interior);
  line += "," + std::to_string(row.num_boundary);
  line += "," + format("%.6g", row.nu);
  line += "," + format("%.3E", row.gamma);
  line += "," + std::to_string(row.newton);
  line += "," + std::to_string(row.pcg);
  line += "," + std::to_string(row.num_active);
  line += "," + std::to_string(row.num_active_omega);
  line += "," + format("%.10g", row.J);
  line += "," + format("%.3E", row.r_d);
  line += "," + format("%.3E", row.mcv);
  line += "," + format("%.3f", row.seconds);
  return line;
}

void write_solution_vtk(const std::string& path, const SolverReport& report) {
  const DiscreteProblem& prob = *report.problem;
  const Index n = prob.mesh().num_nodes();
  const FieldVector control = prob.boundary_to_field(report.u);

  FieldVector multiplier = FieldVector::Zero(n);
  for (const MultiplierWeight& m : report.multiplier) multiplier[m.node] = m.weight;
  FieldVector extra = multiplier - prob.fem().mass * prob.target_nodal();
  const Vector phi_interior = prob.adjoint_state(report.y, &extra);
  FieldVector adjoint = FieldVector::Zero(n);
  for (Index i = 0; i < prob.num_interior(); ++i) adjoint[prob.sets().interior[i]] = phi_interior[i];

  const NamedField fields[] = {
      {"control", &control}, {"state", &report.y}, {"adjoint", &adjoint}, {"multiplier", &multiplier}};
  write_vtk(path, prob.mesh(), fields);
}

RunOutcome run(const RunConfig& config, std::ostream& log) {
  RunOutcome outcome;
  std::vector<ProblemSpec> specs;
  try {
    for (double nu : nu_values(config)) specs.push_back(to_problem_spec(config, nu));
  } catch (const ConfigError& e) {
    outcome.exit_code = kExitConfigError;
    outcome.message = e.what();
    return outcome;
  }

  std::filesystem::create_directories(config.out);
  std::ofstream csv;
  if (config.csv) {
    csv.open(std::filesystem::path(config.out) / "report.csv");
    if (!csv) {
      outcome.exit_code = kExitFailure;
      outcome.message = "cannot write report.csv in " + config.out;
      return outcome;
    }
    csv << csv_header() << '\n' << std::flush;
  }

  for (std::size_t k = 0; k < specs.size(); ++k) {
    SolverReport report;
    try {
      ProblemLadder ladder(specs[k]);
      report = solve_ladder(ladder);
    } catch (const std::exception& e) {
      outcome.exit_code = kExitFailure;
      outcome.message = e.what();
      return outcome;
    }
    for (const ReportRow& row : report.rows) {
      if (config.csv) csv << csv_line(row) << '\n' << std::flush;
      log << csv_line(row) << '\n';
    }
    if (config.vtk && report.problem) write_solution_vtk(vtk_path(config, k, specs.size()), report);
    const bool converged = report.converged;
    const std::string message = report.message;
    outcome.reports.push_back(std::move(report));
    if (!converged) {
      outcome.exit_code = kExitNotConverged;
      outcome.message = message;
      return outcome;
    }
  }
  return outcome;
}

}  // namespace dck::cli
