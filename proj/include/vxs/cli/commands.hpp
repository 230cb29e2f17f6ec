// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace vxs::cli {

/// Parses and dispatches all subcommands. Exit codes: 0 success,
/// 1 numeric failure, 2 usage or I/O error.
int run(int argc, const char* const* argv);

} // namespace vxs::cli
