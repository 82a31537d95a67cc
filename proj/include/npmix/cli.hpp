#pragma once

#include <iosfwd>

namespace npmix {

enum ExitCode : int {
    kExitOk = 0,
    kExitBadInput = 2,
    kExitFitFailure = 3,
    kExitBadGrid = 4,
};

// Entry point of the `npmix` command (fit | select | simulate | eval).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace npmix
