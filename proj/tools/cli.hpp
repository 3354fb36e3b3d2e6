#pragma once

#include <string>
#include <vector>

namespace abstain::cli {

inline constexpr const char* kToolVersion = "abstain 0.1.0";

/// Runs one command line (argv[0] is the program name). Returns the exit
/// code: 0 success, 1 runtime failure, 2 usage error.
int run(const std::vector<std::string>& argv);

std::string sha256_file(const std::string& path);

}  // namespace abstain::cli
