#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace emsrl::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsageError = 2;
inline constexpr int kRunError = 1;
inline constexpr int kDiverged = 3;

// Environment variable that overrides ppo.workers for every command.
inline constexpr const char* kWorkersEnv = "EMSRL_WORKERS";

// Entry point behind the `emsrl` binary. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace emsrl::cli
