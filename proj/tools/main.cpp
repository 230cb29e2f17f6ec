// SPDX-License-Identifier: Apache-2.0
#include "vxs/cli/commands.hpp"

int main(int argc, char** argv) { return vxs::cli::run(argc, argv); }
