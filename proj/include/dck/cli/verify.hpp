#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dck::cli {

struct VerifyOptions {
  bool quick = false;
  unsigned seed = 1;
  /// Test hook: scale the assembled boundary mass of every production problem by 1.01.
  bool corrupt_boundary_mass = false;
  /// Worker threads; 0 reads DCK_THREADS, else the hardware concurrency.
  int threads = 0;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Thread count from DCK_THREADS (at least 1), or `fallback` when unset or invalid.
int threads_from_env(int fallback);

/// Runs the property suite on small meshes. Results keep a fixed order.
std::vector<CheckResult> run_verify(const VerifyOptions& options);

/// One "PASS|FAIL name (detail)" line per check; returns true if all passed.
bool print_verify(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace dck::cli
