#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sih {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2 };

// Runs one `sih` invocation. `args` excludes the program name. Subcommands:
// train, update, encode, query, eval, blobs.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sih
