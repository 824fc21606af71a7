#ifndef IDSBD_TOOLS_COMMANDS_H_
#define IDSBD_TOOLS_COMMANDS_H_

#include <string>
#include <vector>

namespace idsbd::cli {

// Parses and runs one command line (without the program name). Returns the
// process exit code: 0 on success, 2 on invalid input, 1 on runtime failure.
int Run(const std::vector<std::string>& args);

}  // namespace idsbd::cli

#endif  // IDSBD_TOOLS_COMMANDS_H_
