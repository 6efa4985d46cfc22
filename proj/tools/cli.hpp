#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace av360::cli {

// Front door used by both the av360 binary and the test suites.
// Exit status: 0 success, 1 invalid input (message names the offending
// record), 2 unknown command or bad usage.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace av360::cli
