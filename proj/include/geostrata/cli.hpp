#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace geostrata::cli {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitRefused = 2;

std::string toolkit_version();

/// Runs the command line `args` (without the program name). Diagnostics go
/// to `err` as a single "error: ..." line; progress goes to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace geostrata::cli
