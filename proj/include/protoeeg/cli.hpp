#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace protoeeg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Runs one subcommand. `args` excludes the program name. Option values resolve as
// command-line flag, then --config-file entry, then built-in default; the resolved values are
// written to <out-dir>/resolved_config.json and that file alone reproduces the run.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace protoeeg
