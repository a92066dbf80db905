#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hetero::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kVerificationFailed = 2,
  kDataFormat = 3,
};

// Runs the `hetero` command line. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hetero::cli
