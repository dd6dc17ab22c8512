#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace actmon::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2 };

/// Runs one `actmon` invocation; argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Convenience overload; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace actmon::cli
