#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace shica::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitIo = 3;

/// Runs the `shica` command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace shica::cli
