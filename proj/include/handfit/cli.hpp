#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace handfit {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumerical = 3,
};

/// Runs one invocation. `args` excludes the program name. Reports go to `out`;
/// failures print a single line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Environment variable naming the default model file.
inline constexpr const char* kModelEnv = "HANDFIT_MODEL";

} // namespace handfit
