#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace depotcast::cli {

/// Runs one depotcast subcommand. `args` excludes the program name.
/// Returns 0 on success, 2 on usage errors, 1 on any other failure.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace depotcast::cli
