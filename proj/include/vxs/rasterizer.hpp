// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "vxs/camera.hpp"
#include "vxs/gaussian.hpp"
#include "vxs/image.hpp"

namespace vxs {

struct RenderConfig {
    double znear = 0.01;
    double dilation = 0.3;                   // screen-space cov2d dilation (pixels^2)
    double alpha_cutoff = 1.0 / 255.0;       // per-sample contribution cutoff
    double transmittance_cutoff = 1e-4;      // front-to-back early stop
    double max_condition = 1e12;             // cov2d condition limit before a Gaussian is skipped
    int tile_size = 16;
    int threads = 1;
};

struct RenderOutput {
    Image color;
    ScalarMap depth;
    Image normal;
    ScalarMap alpha;
};

struct ParamGradients {
    std::vector<Eigen::Vector3d> position;
    std::vector<Eigen::Vector4d> rotation;
    std::vector<Eigen::Vector3d> log_scale;
    std::vector<double> opacity_logit;
    std::vector<Eigen::Vector3d> color;
    std::vector<double> pos_grad_mag; // ||dL/d mean2d|| in NDC units, per Gaussian

    void resize(std::size_t n) {
        position.assign(n, Eigen::Vector3d::Zero());
        rotation.assign(n, Eigen::Vector4d::Zero());
        log_scale.assign(n, Eigen::Vector3d::Zero());
        opacity_logit.assign(n, 0.0);
        color.assign(n, Eigen::Vector3d::Zero());
        pos_grad_mag.assign(n, 0.0);
    }
    std::size_t size() const { return opacity_logit.size(); }
};

struct Projection {
    Eigen::Vector2d mean2d;
    Eigen::Matrix2d cov2d; // includes dilation
    double depth = 0.0;    // camera-space z
};

/// Projects one Gaussian; nullopt when it is culled (camera-space z <= znear).
std::optional<Projection> project(const Gaussian& g, const Camera& cam, const RenderConfig& cfg = {});

/// Front-to-back alpha blending of color, depth, normal and accumulated alpha.
RenderOutput render(const GaussianCloud& cloud, const Camera& cam, const RenderConfig& cfg = {});

/// Analytic gradients of a scalar loss L given dL/d(color), dL/d(depth) and
/// dL/d(normal) images; replays the forward blending internally.
ParamGradients render_backward(const GaussianCloud& cloud, const Camera& cam,
                               const Image& d_color, const ScalarMap& d_depth,
                               const Image& d_normal, const RenderConfig& cfg = {});

} // namespace vxs
