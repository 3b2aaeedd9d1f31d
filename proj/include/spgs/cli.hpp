#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spgs::cli {

/// Exit codes: 0 continue or success, 2 efficacy rejection, 1 error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitReject = 2;

/// Runs `spgs <subcommand> ...`; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string sha256_hex(const std::string& bytes);

}  // namespace spgs::cli
