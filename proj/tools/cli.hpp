#pragma once

#include <string>
#include <vector>

namespace sase::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kNumeric = 3 };

// Runs one command line (without the program name) and returns its exit
// code. Diagnostics go to stderr, short summaries to stdout.
int run(const std::vector<std::string>& args);

}  // namespace sase::cli
