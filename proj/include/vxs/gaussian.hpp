// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vxs/common.hpp"

namespace vxs {

/// Activated 14-channel feature layout:
/// [position(3), scale(3), rotation wxyz(4), opacity(1), color(3)].
using Feature14 = Eigen::Matrix<double, 14, 1>;

constexpr int kFeatureChannels = 14;
constexpr double kOpacityClampLo = 1e-6;
constexpr double kOpacityClampHi = 1.0 - 1e-6;
constexpr double kScaleClampLo = 1e-8;

// One anisotropic 3D Gaussian primitive. Raw (optimizable) parameterization:
// log-scales, an opacity logit, and a quaternion kept unit-norm between
// optimizer steps.
struct Gaussian {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector4d rotation = Eigen::Vector4d(1, 0, 0, 0); // (w, x, y, z)
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    double opacity_logit = 0.0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();

    Eigen::Vector3d scale() const { return log_scale.array().exp(); }
    double opacity() const { return sigmoid(opacity_logit); }

    void renormalize_rotation() {
        const double n = rotation.norm();
        if (n < 1e-12) {
            rotation = Eigen::Vector4d(1, 0, 0, 0);
        } else {
            rotation /= n;
        }
    }
};

struct GaussianCloud {
    std::vector<Gaussian> gaussians;

    std::size_t count() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }
    Gaussian& operator[](std::size_t i) { return gaussians[i]; }
    const Gaussian& operator[](std::size_t i) const { return gaussians[i]; }
};

/// Rotation matrix from a (w, x, y, z) quaternion; normalizes internally.
Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& q);

/// World covariance R diag(scale^2) R^T from a unit quaternion and positive scales.
Eigen::Matrix3d covariance_from(const Eigen::Vector4d& rotation, const Eigen::Vector3d& scale);

/// Unit normal along the Gaussian's shortest covariance axis, sign-flipped so
/// dot(normal, view_dir) <= 0. Scale ties resolve to the lowest axis index.
Eigen::Vector3d shortest_axis_normal(const Gaussian& g, const Eigen::Vector3d& view_dir);

/// Activated 14-vector for a Gaussian.
Feature14 flatten(const Gaussian& g);

/// Inverse of flatten. Opacity is clamped into (1e-6, 1-1e-6) and scale to a
/// positive floor before log/logit inversion; a zero-norm rotation falls back
/// to identity. Opacity outside [0, 1] is an error.
Gaussian unflatten(const Feature14& f);

/// Axis-aligned bounding box of the Gaussian centers.
void cloud_bounds(const GaussianCloud& cloud, Eigen::Vector3d& lo, Eigen::Vector3d& hi);

} // namespace vxs
