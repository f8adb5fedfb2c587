#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dck/cli/config.hpp"

namespace dck::cli {

enum ExitCode : int { kExitOk = 0, kExitNotConverged = 1, kExitConfigError = 2, kExitFailure = 3 };

struct RunOutcome {
  int exit_code = kExitOk;
  std::string message;
  std::vector<SolverReport> reports;  // one per nu value
};

/// Header of report.csv.
std::string csv_header();
/// One CSV line: J with 10 significant digits, residuals as %.3E, empty cells
/// for quantities that do not apply.
std::string csv_line(const ReportRow& row);

/// Solves every nu value over the level ladder. Writes report.csv (row by row,
/// so a failed run keeps its partial table) and, on request, one VTK file per
/// nu value into config.out. Progress goes to `log`.
RunOutcome run(const RunConfig& config, std::ostream& log);

/// Writes control, state, adjoint and multiplier fields of a finished solve.
void write_solution_vtk(const std::string& path, const SolverReport& report);

}  // namespace dck::cli
