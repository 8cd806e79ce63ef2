#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace refjudge::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kIo = 3,
  kPartial = 4,
  kBackendExhausted = 5,
};

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace refjudge::cli
