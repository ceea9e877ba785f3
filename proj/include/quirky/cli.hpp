#pragma once

#include <string>
#include <vector>

namespace quirky {

// Exit codes: 0 success, 1 usage error, 2 data or runtime error.
int cli_dispatch(int argc, const char* const* argv);
int cli_dispatch(const std::vector<std::string>& args);

// "git describe" of the source tree at build time.
const char* build_describe();

}  // namespace quirky
