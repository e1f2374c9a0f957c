#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gramdyn {

/// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitStageError = 1;  // module error, JSON line on stderr
inline constexpr int kExitUsage = 2;       // unknown flag or subcommand

/// Runs one command line (without the program name). Stage failures print
/// {"error": <kind>, "message": ...} on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// argv-style entry point writing to stdout and stderr.
int run(int argc, const char* const* argv);

}  // namespace gramdyn
