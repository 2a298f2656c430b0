#pragma once

// count-synth fit|simulate|screen|summarize
//
// Exit codes: 0 success, 1 input or validation error, 2 convergence failure.

#include <ostream>

namespace countsynth {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitNotConverged = 2;

inline constexpr const char* kSeedEnvironmentVariable = "COUNT_SYNTH_SEED";

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace countsynth
