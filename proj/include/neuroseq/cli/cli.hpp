#pragma once

#include <string>
#include <vector>

namespace neuroseq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args);

int run(int argc, const char* const* argv);

}  // namespace neuroseq::cli
