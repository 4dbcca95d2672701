#pragma once

#include <string>
#include <vector>

namespace cellstack::cli {

// Entry point shared by the binary and the end-to-end tests. argv style:
// {"simulate", "--config", "cfg.json"}. Returns the process exit code:
// 0 success, 2 config error, 3 schema error, 4 numeric failure.
int run(const std::vector<std::string>& args);

}  // namespace cellstack::cli
