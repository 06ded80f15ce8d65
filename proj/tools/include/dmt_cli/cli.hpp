#pragma once

#include <ostream>

namespace dmt::cli {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFailure = 2;

/// Parses argv (argv[0] is the program name) and runs one subcommand.
/// Usage problems print the message and usage text to `err` and return 1;
/// runtime failures print the error to `err` and return 2.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dmt::cli
