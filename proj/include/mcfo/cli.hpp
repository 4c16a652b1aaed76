#pragma once

#include <string>
#include <vector>

namespace mcfo {

// Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
int cli_main(int argc, char** argv);
// args excludes the program name.
int cli_main(const std::vector<std::string>& args);

}  // namespace mcfo
