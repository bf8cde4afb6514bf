#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dmrs::cli {

/// Runs one subcommand. `args` excludes the program name. Returns the
/// process exit code: 0 success, 1 configuration/validation failure,
/// 2 I/O, format or integrity failure.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dmrs::cli
