#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace v6recon::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable consulted when `probe` gets no --key.
inline constexpr const char* kKeyEnv = "V6RECON_KEY";

/// Runs one invocation; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace v6recon::cli
