// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "vxs/camera.hpp"

namespace vxs {

struct ManifestView {
    Camera cam;
    std::string color_path;
    std::string depth_path;  // empty if absent
    std::string normal_path; // empty if absent
    std::string alpha_path;  // optional coverage mask for masked losses
};

struct SceneManifest {
    std::vector<ManifestView> views;
    Eigen::Vector3d bounds_lo = Eigen::Vector3d::Zero();
    Eigen::Vector3d bounds_hi = Eigen::Vector3d::Zero();
};

void write_manifest(const std::string& path, const SceneManifest& manifest);

/// Parses and validates; paths stay relative to the manifest's directory.
/// check_files additionally requires every referenced file to exist.
SceneManifest read_manifest(const std::string& path, bool check_files = true);

/// Directory-relative path resolution for manifest entries.
std::string manifest_relative(const std::string& manifest_path, const std::string& entry);

} // namespace vxs
