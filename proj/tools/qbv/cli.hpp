#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qbv::cli {

/// Runs the qbv command line with args[0] as the program name. Returns the
/// process exit code; normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qbv::cli
