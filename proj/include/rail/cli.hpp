#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rail/trainer.hpp"

namespace rail {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitFormat = 3, kExitDivergence = 4 };

// Entry point behind the `rail` binary. args excludes the program name.
int command_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Output root: $RAIL_RUNS_ROOT if set, else ./runs.
std::filesystem::path runs_root();

std::string logs_csv(const std::vector<IterationLog>& logs);
std::vector<IterationLog> parse_logs_csv(const std::string& text);

}  // namespace rail
