#pragma once

#include <string>
#include <vector>

namespace coevo::cli {

/// Full command-line entry point (gen / knn / noise / train / eval / verify /
/// report). Returns the process exit code: 0 on success, 1 when a run or
/// check fails, 2 on usage errors.
int run(int argc, const char* const* argv);

/// Same, for in-process callers; args excludes the program name.
int run(const std::vector<std::string>& args);

} // namespace coevo::cli
