#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fuess {

/// Entry point of the `fuess` tool. `args` excludes the program name.
/// Returns 0 on success, 1 on a usage error and 2 on a runtime error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fuess
