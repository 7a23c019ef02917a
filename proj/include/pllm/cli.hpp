#pragma once

#include <string>
#include <vector>

namespace pllm {

// Entry point shared by the periodllm binary and the in-process CLI tests.
// args excludes argv[0]. Returns a process exit code; 0 means every
// requested artifact was written.
int run_cli(const std::vector<std::string>& args);

}  // namespace pllm
