#pragma once

#include <string>
#include <vector>

namespace dtx {

/// Entry point of the dtextract tool. Returns 0 on success, 2 on configuration
/// errors and 1 on runtime failures.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace dtx
