// SPDX-License-Identifier: Apache-2.0
#include "vxs/gaussian.hpp"

#include <algorithm>

namespace vxs {

Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& q_in) {
    Eigen::Vector4d q = q_in;
    const double n = q.norm();
    if (n < 1e-12) {
        q = Eigen::Vector4d(1, 0, 0, 0);
    } else {
        q /= n;
    }
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Eigen::Matrix3d covariance_from(const Eigen::Vector4d& rotation, const Eigen::Vector3d& scale) {
    if (!rotation.allFinite() || !scale.allFinite()) {
        throw InvalidParameter("covariance_from: non-finite inputs");
    }
    if ((scale.array() <= 0.0).any()) {
        throw InvalidParameter("covariance_from: scale components must be positive");
    }
    const Eigen::Matrix3d r = rotation_matrix(rotation);
    const Eigen::Matrix3d cov = r * scale.array().square().matrix().asDiagonal() * r.transpose();
    // Symmetrize away round-off.
    return 0.5 * (cov + cov.transpose());
}

Eigen::Vector3d shortest_axis_normal(const Gaussian& g, const Eigen::Vector3d& view_dir) {
    const Eigen::Vector3d s = g.scale();
    int k = 0;
    for (int i = 1; i < 3; ++i) {
        if (s[i] < s[k]) k = i;
    }
    const Eigen::Matrix3d r = rotation_matrix(g.rotation);
    Eigen::Vector3d n = r.col(k);
    if (n.dot(view_dir) > 0.0) n = -n;
    return n;
}

Feature14 flatten(const Gaussian& g) {
    Feature14 f;
    f.segment<3>(0) = g.position;
    f.segment<3>(3) = g.scale();
    Eigen::Vector4d q = g.rotation;
    const double n = q.norm();
    q = n < 1e-12 ? Eigen::Vector4d(1, 0, 0, 0) : Eigen::Vector4d(q / n);
    f.segment<4>(6) = q;
    f[10] = g.opacity();
    f.segment<3>(11) = g.color;
    return f;
}

Gaussian unflatten(const Feature14& f) {
    if (!f.allFinite()) throw InvalidParameter("unflatten: non-finite feature vector");
    const double opacity = f[10];
    if (opacity < 0.0 || opacity > 1.0) {
        throw InvalidParameter("unflatten: opacity outside [0, 1]");
    }
    Gaussian g;
    g.position = f.segment<3>(0);
    g.log_scale = f.segment<3>(3).cwiseMax(kScaleClampLo).array().log();
    g.rotation = f.segment<4>(6);
    g.renormalize_rotation();
    g.opacity_logit = logit(std::clamp(opacity, kOpacityClampLo, kOpacityClampHi));
    g.color = f.segment<3>(11);
    return g;
}

void cloud_bounds(const GaussianCloud& cloud, Eigen::Vector3d& lo, Eigen::Vector3d& hi) {
    if (cloud.empty()) {
        lo = Eigen::Vector3d::Zero();
        hi = Eigen::Vector3d::Zero();
        return;
    }
    lo = cloud[0].position;
    hi = cloud[0].position;
    for (const Gaussian& g : cloud.gaussians) {
        lo = lo.cwiseMin(g.position);
        hi = hi.cwiseMax(g.position);
    }
}

} // namespace vxs
