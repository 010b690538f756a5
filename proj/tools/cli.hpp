#pragma once

#include <iosfwd>

namespace llmdetect::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kServiceError = 3 };

/// Runs one subcommand. Tables and the run directory go to `out`, errors
/// to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace llmdetect::cli
