#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ldn::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;

// Runs one command line (without the program name). Help, the effective
// config and summaries go to `out`; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

// Data-loading threads: hardware concurrency capped by LDN_NUM_WORKERS.
// Throws UsageError when the variable is set but not a positive integer.
int worker_count();

}  // namespace ldn::cli
