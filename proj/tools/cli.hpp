#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace specklenet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (args exclude the program name). Returns the exit
/// code; diagnostics go to `err`, progress lines to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace specklenet::cli
