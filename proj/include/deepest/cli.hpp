#pragma once

#include <iosfwd>
#include <string>
#include <vector>

// Command-line front end shared by the `deepest` executable and the Python
// module. `args` excludes the program name.
namespace deepest {

// Exit status: 0 success, 1 runtime failure, 2 UnknownCommand, InvalidFlag
// or InvalidConfig. Failures print one JSON line {"error", "message"} to `err`;
// successful commands print one JSON summary line to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::vector<std::string> cli_commands();

}  // namespace deepest
