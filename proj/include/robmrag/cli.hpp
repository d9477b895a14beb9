#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace robmrag {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Runs the command-line tool. args excludes the program name. Results go to
// out, diagnostics and usage text to err.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace robmrag
