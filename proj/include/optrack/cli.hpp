#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace optrack {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitNumerical = 3, kExitIo = 4 };

/// Entry point of the `optrack` tool; argv[0] is the program name.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Convenience overload; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// `start:stop:step` (inclusive) or a comma list; a single number is a one-element list.
std::vector<double> parse_grid(const std::string& text);
std::vector<int> parse_int_grid(const std::string& text);

}  // namespace optrack
