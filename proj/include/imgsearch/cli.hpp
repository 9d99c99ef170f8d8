#pragma once

// The `imgsearch` command line, callable in-process.

#include <iosfwd>
#include <string>
#include <vector>

namespace imgsearch {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitData = 2,     // malformed input, failed validation
    kExitIo = 3,       // filesystem or network failure
};

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace imgsearch
