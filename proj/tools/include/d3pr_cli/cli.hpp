#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace d3pr::cli {

/// Exit codes; 0 is success.
enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kIo = 3,
  kFormat = 4,
  kConfig = 5,
};

/// Runs one subcommand. Diagnostics and the resolved-config log go to `err`,
/// reports without an output path go to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace d3pr::cli
