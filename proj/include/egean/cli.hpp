#pragma once

#include <string>
#include <vector>

namespace egean::cli {

// Exit codes: 0 success, 2 I/O or configuration failure, 3 enumeration size
// refusal, 4 numeric abort during training.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSize = 3;
inline constexpr int kExitNumeric = 4;

// Runs one subcommand; args are the command-line arguments after the program
// name (e.g. {"simulate", "--world.n_pairs", "100"}).
int run(const std::vector<std::string>& args);

}  // namespace egean::cli
