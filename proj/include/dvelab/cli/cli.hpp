#pragma once

#include <ostream>
#include <span>
#include <string>

namespace dvelab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Runs the command suite on `args` (without the program name). Normal
/// output goes to `out`, diagnostics and usage text on failure to `err`.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace dvelab::cli
