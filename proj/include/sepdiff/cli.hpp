#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sepdiff {

/// Process exit statuses of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitBadArguments = 2,
  kExitIo = 3,
  kExitNumeric = 4,
};

/// Runs the command line `args` (without the program name). Normal output
/// goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sepdiff
