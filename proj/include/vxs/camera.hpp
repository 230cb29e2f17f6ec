// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include "vxs/common.hpp"

namespace vxs {

// Pinhole camera. world_to_camera maps p_cam = R * p_world + t;
// +z looks into the scene.
struct Camera {
    double fx = 1.0, fy = 1.0;
    double cx = 0.0, cy = 0.0;
    int width = 1, height = 1;
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();

    Eigen::Vector3d center() const { return -R.transpose() * t; }

    void validate() const {
        if (fx <= 0.0 || fy <= 0.0) throw InvalidParameter("camera: focal lengths must be positive");
        if (width < 1 || height < 1) throw InvalidParameter("camera: degenerate image size");
        const double err = (R * R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
        if (err > 1e-9 || !R.allFinite() || !t.allFinite()) {
            throw InvalidParameter("camera: rotation not orthonormal");
        }
    }
};

/// Camera at `eye` looking at `target`, +z forward, `up` as the vertical hint.
inline Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                      const Eigen::Vector3d& up, double fx, double fy, int width, int height) {
    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    cam.width = width;
    cam.height = height;
    Eigen::Vector3d fwd = (target - eye).normalized();
    Eigen::Vector3d right = fwd.cross(up).normalized();
    Eigen::Vector3d down = fwd.cross(right);
    cam.R.row(0) = right;
    cam.R.row(1) = down;
    cam.R.row(2) = fwd;
    cam.t = -cam.R * eye;
    return cam;
}

} // namespace vxs
