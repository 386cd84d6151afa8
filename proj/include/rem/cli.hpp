#ifndef REM_CLI_HPP
#define REM_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace rem {

inline constexpr const char* kToolVersion = "1.0.0";

// In-process CLI entry point; `args` excludes the program name. Returns the
// process exit code: 0 success, 1 user error, 2 numerical failure.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace rem

#endif  // REM_CLI_HPP
