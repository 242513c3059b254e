#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fsood::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kInfeasible = 3,
  kMissingResource = 4,
  kCheckFailed = 5,
};

/// Runs the command line `args` (without the program name), writing normal
/// output to `out` and diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fsood::cli
