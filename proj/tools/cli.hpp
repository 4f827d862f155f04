#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace coronet::cli {

/// Runs one subcommand (`args` excludes the program name). Returns the process
/// exit code; diagnostics go to `err`, progress and reports to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace coronet::cli
