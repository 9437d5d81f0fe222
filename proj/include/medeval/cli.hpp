#pragma once
// Command-line front end. Every subcommand prints a JSON summary on stdout;
// failures print {"error", "message", "detail"} on stderr.
//
// Exit codes: 0 success, 1 pipeline error, 2 usage error.

#include <ostream>
#include <string>
#include <vector>

namespace medeval::cli {

// args excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace medeval::cli
