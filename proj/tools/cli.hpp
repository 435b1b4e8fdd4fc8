#pragma once

#include <string>
#include <vector>

namespace tmca::cli {

// Runs one command line (args[0] is the program name). Returns the process
// exit code: 0 success, 2 usage/config/data error, 3 numerical abort.
int run(const std::vector<std::string>& args);

}  // namespace tmca::cli
