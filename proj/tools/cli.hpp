#ifndef DEEPCOUGH_TOOLS_CLI_HPP
#define DEEPCOUGH_TOOLS_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace deepcough::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// args excludes the program name. Reports go to `out`, progress and
// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deepcough::cli

#endif  // DEEPCOUGH_TOOLS_CLI_HPP
