#pragma once

#include <iosfwd>

namespace daug::cli {

/// Parses argv, runs one subcommand and returns the process exit code.
/// Diagnostics go to `err`, progress and summaries to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace daug::cli
