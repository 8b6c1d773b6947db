#ifndef LABGRADE_TOOLS_CLI_HPP_
#define LABGRADE_TOOLS_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace labgrade::cli {

// `args` excludes the program name.
// Exit codes: 0 success, 1 validation/config/mode errors, 2 runtime/IO errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace labgrade::cli

#endif  // LABGRADE_TOOLS_CLI_HPP_
