#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace odp::cli {

// Stable exit status contract.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

// Runs the command line `args` (program name first). Subcommands: poison,
// evaluate, tre-scan, grid, inspect. Options may come from a TOML file given
// with --config; command-line flags override it.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace odp::cli
