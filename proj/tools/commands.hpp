#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mortflow/error.hpp"

namespace mortflow::cli {

/// 2 usage/config, 3 data, 4 numerical.
int exit_code(ErrorKind kind);

/// Runs the command line (without the program name); returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mortflow::cli
