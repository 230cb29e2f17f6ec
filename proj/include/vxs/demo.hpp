// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "vxs/edc.hpp"
#include "vxs/gaussian.hpp"

namespace vxs {

struct DemoSceneConfig {
    int n_views = 16;
    int image_size = 64;
    int pretrained_count = 1000;
    std::uint64_t seed = 7;
};

struct DemoScene {
    GaussianCloud pretrained; // variable-count source cloud (textured cube + sphere)
    std::vector<TrainingView> views;
    Eigen::Vector3d bounds_lo = Eigen::Vector3d::Zero();
    Eigen::Vector3d bounds_hi = Eigen::Vector3d::Zero();
};

/// Synthetic desk-scale scene: a checker-textured cube plus a sphere cloud,
/// with ground-truth color/depth/normal/alpha rendered from the cloud itself.
DemoScene build_demo_scene(const DemoSceneConfig& cfg, const RenderConfig& render_cfg = {});

/// Parametric object clouds (kind 0..3: cube, sphere, cylinder, twin spheres)
/// with an exact Gaussian count, for voxelization and diffusion toys.
GaussianCloud demo_object(int kind, std::size_t count, std::uint64_t seed);

/// Deterministic ring of cameras around the given bounds.
std::vector<Camera> ring_cameras(int n_views, int image_size, const Eigen::Vector3d& lo,
                                 const Eigen::Vector3d& hi);

} // namespace vxs
