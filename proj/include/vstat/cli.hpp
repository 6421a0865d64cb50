#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vstat {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes of the command-line front end.
enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitConfig = 2,
    kExitNumerical = 3,
    kExitHypothesis = 4,
};

/// Runs one command; args excludes the program name. Diagnostics go to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vstat
