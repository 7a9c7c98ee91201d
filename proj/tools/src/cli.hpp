#pragma once

#include <ostream>

#include "lanesurvey/errors.hpp"

namespace lanesurvey::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUnexpected = 1;

/// Process exit code for an error category.
int exit_code(ErrorCategory category);

/// Parses arguments, runs one subcommand and returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lanesurvey::cli
