#pragma once

#include <iosfwd>

namespace resmatch {

enum ExitCode { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitNumeric = 4 };

/// Runs one `resmatch` subcommand. Messages go to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace resmatch
