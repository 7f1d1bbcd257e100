#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace clipsplat::cli {

/// Exit codes of the command line.
enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kInputError = 2,
    kIncompatible = 3,
    kDiverged = 4,
};

/// Runs one command line (`args` excludes the program name) and returns its exit code.
/// Subcommands: fit, stylize, render, interpolate, metrics. A TOML file given with `--config`
/// supplies defaults per subcommand section; flags override it.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace clipsplat::cli
