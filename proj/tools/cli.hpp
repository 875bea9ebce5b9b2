#pragma once

// The kprobe command line. `run` is the whole program minus process setup, so
// tests can drive it with in-memory streams.

#include <iosfwd>
#include <string>
#include <vector>

#include "kprobe/error.hpp"

namespace kprobe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 2;
inline constexpr int kExitUsage = 3;
inline constexpr int kExitModelMismatch = 4;
inline constexpr int kExitTraining = 5;

int exit_code_for(ErrorCode code) noexcept;

/// `args` excludes the program name. Data goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

} // namespace kprobe::cli
