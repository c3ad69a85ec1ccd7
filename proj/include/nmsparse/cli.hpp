// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace nmsparse {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPropertyFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;

/// Entry point of the `nmsparse` command. Results go to `out`, diagnostics
/// to `err`.
int cli_main(int argc, const char* const* argv, std::ostream& out,
             std::ostream& err);
int cli_main(int argc, const char* const* argv);

}  // namespace nmsparse
