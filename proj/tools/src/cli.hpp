#pragma once

#include <iosfwd>

namespace limesup::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Parses argv and runs one subcommand.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace limesup::cli
