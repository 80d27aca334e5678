#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace supply_eq::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kInputData = 3, kNoConvergence = 4 };

/// Runs one subcommand. Reports go to `out` unless --output is given;
/// diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace supply_eq::cli
