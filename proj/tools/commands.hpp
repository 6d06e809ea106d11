#pragma once

#include <ostream>
#include <span>
#include <string>

namespace rqrf::cli {

/// Exit codes of the rqrf tool.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kBadConfig = 2,
  kBadArtifact = 3,
  kNumericAbort = 4,
};

/// Runs the tool on `args` (args[0] is the program name). Reports go to `out`; failures are a
/// single `error ...` line on `err`. Returns the process exit code.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace rqrf::cli
