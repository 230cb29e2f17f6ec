// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "vxs/image.hpp"

namespace vxs {

/// 8-bit binary PPM (P6); channels are clamped to [0,1] and rounded.
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

/// Single-channel little-endian PFM ("Pf"), float32, bottom-up rows.
void write_pfm(const std::string& path, const ScalarMap& map);
ScalarMap read_pfm(const std::string& path);

/// Three-channel little-endian PFM ("PF"), used for normal maps.
void write_pfm(const std::string& path, const Image& img);
Image read_pfm_rgb(const std::string& path);

} // namespace vxs
