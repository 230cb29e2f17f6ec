// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "vxs/common.hpp"

namespace vxs {

struct CheckpointArray {
    std::vector<std::uint64_t> shape;
    std::vector<double> data;
};

using Checkpoint = std::map<std::string, CheckpointArray>;

/// Little-endian binary of named double arrays with shapes.
void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::string& path);

} // namespace vxs
