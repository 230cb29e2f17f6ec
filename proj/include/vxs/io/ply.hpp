// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "vxs/gaussian.hpp"

namespace vxs {

/// Binary little-endian PLY with double properties
/// x,y,z, scale_0..2 (log), rot_0..3 (wxyz), opacity (logit), f_dc_0..2.
void write_ply(const std::string& path, const GaussianCloud& cloud);

/// Reads the layout written by write_ply; float32 variants of the same
/// properties (other 3DGS tooling) are accepted, extra scalar properties are
/// skipped. Malformed headers raise IoError with the offending line number.
GaussianCloud read_ply(const std::string& path);

} // namespace vxs
