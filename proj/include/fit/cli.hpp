#pragma once

#include <ostream>

namespace fit {

// Exit statuses of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;    // bad arguments, unreadable input, invalid config
inline constexpr int kExitFailure = 2;  // invariant or self-test failure

// Entry point of `fit`; verbs: train, infer, eval, fem, grad-check, selftest.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fit
