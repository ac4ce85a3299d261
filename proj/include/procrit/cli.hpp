#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace procrit {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitVerificationFailed = 1,
  kExitConfigError = 2,
  kExitTransportError = 3,
};

/// Runs the command line `args` (without the program name) and returns the
/// process exit code. Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace procrit
