#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace shambayes::cli {

enum ExitCode : int {
  kOk = 0,
  kValidation = 2,
  kRuntime = 3,
  kNotConverged = 4,
};

/// Runs one command line (args excludes the program name). Messages go to
/// `out` and `err`; files go under --out-dir.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace shambayes::cli
