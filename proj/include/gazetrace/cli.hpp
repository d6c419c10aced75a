#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gazetrace::cli {

/// Exit codes: 0 success, 1 usage, 2 data/validation, 3 runtime/IO.
enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

/// Runs one command line (without the program name). Data goes to `out`
/// unless written to files; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gazetrace::cli
