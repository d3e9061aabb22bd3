#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace msv {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

/// Entry point of the msv command. args excludes the program name.
/// Errors are reported on err and mapped to exit codes.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace msv
