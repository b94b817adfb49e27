#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pgsum {

// Exit statuses of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissingFile = 3;

// Runs `pgsum <vocab|train|decode|eval> ...`; args exclude the program name.
// Diagnostics go to `err` as a single line.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace pgsum
