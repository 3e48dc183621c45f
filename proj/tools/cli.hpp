#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace kcal::cli {

/// Runs the command line `args` (args[0] is the program name). Data goes to
/// `out`, logs to stderr. Returns 0 on success, 1 on an internal or numeric
/// failure and 2 on a usage or configuration error.
int run(const std::vector<std::string>& args, std::ostream& out);

} // namespace kcal::cli
