#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace regdistill::cli {

/// Exit codes of run_command.
enum ExitCode : int {
  kOk = 0,
  kValidationFailure = 1,
  kTransportFailure = 2,
  kUsageError = 3,
};

/// Runs one subcommand. `args` excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// argv-style entry point writing to stdout / stderr.
int run_command(int argc, const char* const* argv);

}  // namespace regdistill::cli
