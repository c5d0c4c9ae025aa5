// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#pragma once

#include <iosfwd>

namespace n2n::cli {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `n2n` tool. Subcommands: synth, mix, train, denoise,
// eval, report.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace n2n::cli
