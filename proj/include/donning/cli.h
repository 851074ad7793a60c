#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace donning {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;        // runtime failure
inline constexpr int kExitUsage = 2;          // bad arguments or configuration
inline constexpr int kExitIncompatible = 3;   // checkpoint does not fit the environment

// Runs one command; `args` excludes the program name.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace donning
