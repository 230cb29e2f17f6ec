// SPDX-License-Identifier: Apache-2.0
#include "vxs/voxel_grid.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "vxs/assignment.hpp"

namespace vxs {

std::vector<Eigen::Vector3d> voxel_centers(int n, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
    if (n < 2) throw InvalidParameter("voxel_centers: n must be >= 2");
    if (((hi - lo).array() <= 0.0).any()) throw InvalidParameter("voxel_centers: degenerate bounds");
    std::vector<Eigen::Vector3d> centers;
    centers.reserve(static_cast<std::size_t>(n) * n * n);
    const Eigen::Vector3d step = (hi - lo) / static_cast<double>(n);
    for (int iz = 0; iz < n; ++iz) {
        for (int iy = 0; iy < n; ++iy) {
            for (int ix = 0; ix < n; ++ix) {
                centers.emplace_back(lo.x() + (ix + 0.5) * step.x(),
                                     lo.y() + (iy + 0.5) * step.y(),
                                     lo.z() + (iz + 0.5) * step.z());
            }
        }
    }
    return centers;
}

std::vector<int> assign_ot(const std::vector<Eigen::Vector3d>& positions,
                           const std::vector<Eigen::Vector3d>& centers) {
    if (positions.size() != centers.size() || positions.empty()) {
        throw InvalidParameter("assign_ot: point sets must be non-empty and of equal size");
    }
    for (const auto& p : positions) {
        if (!p.allFinite()) throw InvalidParameter("assign_ot: non-finite position");
    }
    const std::size_t n = positions.size();
    if (n <= 1024) {
        Eigen::MatrixXd cost(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    (positions[i] - centers[j]).squaredNorm();
            }
        }
        return solve_assignment_exact(cost);
    }
    return auction_assignment(positions, centers);
}

void default_grid_bounds(const GaussianCloud& cloud, Eigen::Vector3d& lo, Eigen::Vector3d& hi) {
    cloud_bounds(cloud, lo, hi);
    Eigen::Vector3d span = hi - lo;
    for (int a = 0; a < 3; ++a) span[a] = std::max(span[a], 1e-6);
    lo -= 0.05 * span;
    hi += 0.05 * span;
}

VoxelGrid structure(const GaussianCloud& cloud, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
    const std::size_t count = cloud.count();
    const int n = static_cast<int>(std::llround(std::cbrt(static_cast<double>(count))));
    if (n < 2 || static_cast<std::size_t>(n) * n * n != count) {
        throw InvalidParameter("structure: cloud count must be n^3 with n >= 2");
    }
    const std::vector<Eigen::Vector3d> centers = voxel_centers(n, lo, hi);
    std::vector<Eigen::Vector3d> positions;
    positions.reserve(count);
    for (const Gaussian& g : cloud.gaussians) positions.push_back(g.position);

    VoxelGrid grid;
    grid.n = n;
    grid.bounds_lo = lo;
    grid.bounds_hi = hi;
    grid.features.assign(count * kFeatureChannels, 0.0);
    grid.assignment = assign_ot(positions, centers);
    for (std::size_t i = 0; i < count; ++i) {
        const Feature14 f = flatten(cloud[i]);
        double* cell = grid.cell(static_cast<std::size_t>(grid.assignment[i]));
        for (int c = 0; c < kFeatureChannels; ++c) cell[c] = f[c];
    }
    return grid;
}

GaussianCloud unstructure(const VoxelGrid& grid) {
    if (grid.n < 2 || grid.features.size() != grid.cells() * kFeatureChannels) {
        throw InvalidParameter("unstructure: malformed grid");
    }
    for (double v : grid.features) {
        if (!std::isfinite(v)) throw InvalidParameter("unstructure: non-finite features");
    }
    GaussianCloud cloud;
    cloud.gaussians.reserve(grid.cells());
    for (std::size_t k = 0; k < grid.cells(); ++k) {
        Feature14 f;
        for (int c = 0; c < kFeatureChannels; ++c) f[c] = grid.cell(k)[c];
        // Generated grids may wander outside the activated ranges; clamp the
        // bounded channels before inversion.
        f[10] = std::clamp(f[10], 0.0, 1.0);
        cloud.gaussians.push_back(unflatten(f));
    }
    return cloud;
}

std::vector<double> unstructure_backward(const VoxelGrid& grid, const ParamGradients& grads) {
    if (grads.size() != grid.cells()) {
        throw InvalidParameter("unstructure_backward: gradient cardinality mismatch");
    }
    std::vector<double> d_features(grid.features.size(), 0.0);
    for (std::size_t k = 0; k < grid.cells(); ++k) {
        const double* f = grid.cell(k);
        double* df = d_features.data() + k * kFeatureChannels;

        for (int c = 0; c < 3; ++c) df[c] = grads.position[k][c];

        // log_scale = log(max(f, floor)); zero slope when clamped.
        for (int c = 0; c < 3; ++c) {
            const double s = f[3 + c];
            df[3 + c] = s > kScaleClampLo ? grads.log_scale[k][c] / s : 0.0;
        }

        // rotation = f / |f| (identity fallback has no useful slope).
        Eigen::Vector4d q(f[6], f[7], f[8], f[9]);
        const double qn = q.norm();
        if (qn >= 1e-12) {
            const Eigen::Vector4d u = q / qn;
            const Eigen::Vector4d gu = grads.rotation[k];
            const Eigen::Vector4d gq = (gu - u * u.dot(gu)) / qn;
            for (int c = 0; c < 4; ++c) df[6 + c] = gq[c];
        }

        // opacity_logit = logit(clamp(f)); zero slope outside the clamp range.
        const double p = f[10];
        if (p > kOpacityClampLo && p < kOpacityClampHi) {
            df[10] = grads.opacity_logit[k] / (p * (1.0 - p));
        }

        for (int c = 0; c < 3; ++c) df[11 + c] = grads.color[k][c];
    }
    return d_features;
}

namespace {

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v, const char* what) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError(std::string("voxel grid: truncated ") + what);
}

} // namespace

void write_voxel_grid(const std::string& path, const VoxelGrid& grid) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("voxel grid: cannot open for writing: " + path);
    out.write("VXG1", 4);
    write_pod(out, static_cast<std::uint32_t>(grid.n));
    write_pod(out, static_cast<std::uint32_t>(kFeatureChannels));
    for (int a = 0; a < 3; ++a) write_pod(out, grid.bounds_lo[a]);
    for (int a = 0; a < 3; ++a) write_pod(out, grid.bounds_hi[a]);
    out.write(reinterpret_cast<const char*>(grid.features.data()),
              static_cast<std::streamsize>(grid.features.size() * sizeof(double)));
    if (!out) throw IoError("voxel grid: write failed: " + path);
}

VoxelGrid read_voxel_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("voxel grid: cannot open: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "VXG1", 4) != 0) throw IoError("voxel grid: bad magic");
    std::uint32_t n = 0, channels = 0;
    read_pod(in, n, "header");
    read_pod(in, channels, "header");
    if (n < 2 || n > 4096) throw IoError("voxel grid: implausible resolution");
    if (channels != kFeatureChannels) throw IoError("voxel grid: unsupported channel count");
    VoxelGrid grid;
    grid.n = static_cast<int>(n);
    for (int a = 0; a < 3; ++a) read_pod(in, grid.bounds_lo[a], "bounds");
    for (int a = 0; a < 3; ++a) read_pod(in, grid.bounds_hi[a], "bounds");
    grid.features.resize(grid.cells() * kFeatureChannels);
    in.read(reinterpret_cast<char*>(grid.features.data()),
            static_cast<std::streamsize>(grid.features.size() * sizeof(double)));
    if (!in || in.gcount() != static_cast<std::streamsize>(grid.features.size() * sizeof(double))) {
        throw IoError("voxel grid: truncated features");
    }
    return grid;
}

} // namespace vxs
