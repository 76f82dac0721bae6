#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace localgd {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitDivergence = 2,
  kExitCheckFailed = 3,
  kExitIo = 4,
};

/// Entry point of the `localgd` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace localgd
