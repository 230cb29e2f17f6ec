// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "vxs/gaussian.hpp"
#include "vxs/rasterizer.hpp"

namespace vxs {

// n x n x n x 14 feature tensor. Cell (ix, iy, iz) lives at flat index
// ix + n*iy + n*n*iz (x fastest); channels are contiguous per cell.
struct VoxelGrid {
    int n = 0;
    Eigen::Vector3d bounds_lo = Eigen::Vector3d::Zero();
    Eigen::Vector3d bounds_hi = Eigen::Vector3d::Zero();
    std::vector<double> features;   // n^3 * 14
    std::vector<int> assignment;    // gaussian i -> cell assignment[i]; empty for generated grids

    std::size_t cells() const { return static_cast<std::size_t>(n) * n * n; }
    double* cell(std::size_t k) { return features.data() + k * kFeatureChannels; }
    const double* cell(std::size_t k) const { return features.data() + k * kFeatureChannels; }
};

/// Regular lattice of cell centers in x-fastest order.
std::vector<Eigen::Vector3d> voxel_centers(int n, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi);

/// Minimum-total-squared-distance bijection position i -> center perm[i].
/// Exact for sizes up to 1024, auction approximation beyond.
std::vector<int> assign_ot(const std::vector<Eigen::Vector3d>& positions,
                           const std::vector<Eigen::Vector3d>& centers);

/// Cloud bounding box inflated by 5%, the default structuring bounds.
void default_grid_bounds(const GaussianCloud& cloud, Eigen::Vector3d& lo, Eigen::Vector3d& hi);

/// Arranges a cloud of exactly n^3 Gaussians into a feature grid via OT.
VoxelGrid structure(const GaussianCloud& cloud, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi);

/// Decodes every cell back into a Gaussian (cell order).
GaussianCloud unstructure(const VoxelGrid& grid);

/// Chains raw-parameter gradients of unstructure(grid)'s cloud back to the
/// grid's activated features.
std::vector<double> unstructure_backward(const VoxelGrid& grid, const ParamGradients& grads);

void write_voxel_grid(const std::string& path, const VoxelGrid& grid);
VoxelGrid read_voxel_grid(const std::string& path);

} // namespace vxs
