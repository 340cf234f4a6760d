#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lumina {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitPrecondition = 3;

/// Runs one command line (without the program name). Tables go to `out`,
/// diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lumina
