#pragma once

// mambabench command line: verify, bench, generate, report.
// Exit codes: 0 success, 1 verification or benchmark failure, 2 usage error.

#include <ostream>
#include <string>
#include <vector>

namespace mamba {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable consulted when --out-dir is absent.
inline constexpr const char* kOutDirEnv = "MAMBA_BENCH_OUT";
/// Setting this to "scan-order" makes `verify` run with a scrambled scan
/// combination order (mutation check for the verifier itself).
inline constexpr const char* kFaultEnv = "MAMBA_VERIFY_FAULT";

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mamba
