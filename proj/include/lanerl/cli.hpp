#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lanerl {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitNumerical = 3,
  kExitIo = 4,
};

/// Command-line entry point. `args` excludes the program name.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

}  // namespace lanerl
