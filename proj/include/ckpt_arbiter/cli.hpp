#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ckpt_arbiter {

// Exit codes: 0 success, 1 usage error, 2 data error, 3 judge backend error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitBackend = 3;

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ckpt_arbiter
