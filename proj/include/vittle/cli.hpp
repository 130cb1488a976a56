// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vittle::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitRuntime = 1,
  kExitUsage = 2,
  kExitVerification = 3,
};

/// Runs the `vittle` command line. `args[0]` is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// FNV-1a 64 of a file's bytes as "fnv1a64:<16 hex digits>".
std::string file_digest(const std::string& path);

/// Dotted paths of the model and task fields that differ between two
/// canonical config texts, with both values, e.g. "model.d (32 vs 64)".
std::vector<std::string> config_differences(const std::string& a, const std::string& b);

}  // namespace vittle::cli
