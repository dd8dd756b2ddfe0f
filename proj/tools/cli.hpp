#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mlcap::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kDataError = 3,
  kGradcheckFailed = 4,
};

inline constexpr const char* kVersion = "0.1.0";

int run(int argc, char** argv);
// Same as run() with explicit streams; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mlcap::cli
