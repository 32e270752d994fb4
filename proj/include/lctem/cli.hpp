#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace lctem::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitRuntime = 3;

/// Runs one subcommand; `args` excludes the program name. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace lctem::cli
