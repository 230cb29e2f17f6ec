// SPDX-License-Identifier: Apache-2.0
#include "vxs/demo.hpp"

#include <cmath>

#include "vxs/rasterizer.hpp"

namespace vxs {
namespace {

Eigen::Vector4d quat_from_axes(const Eigen::Vector3d& x_axis, const Eigen::Vector3d& y_axis,
                               const Eigen::Vector3d& z_axis) {
    Eigen::Matrix3d r;
    r.col(0) = x_axis;
    r.col(1) = y_axis;
    r.col(2) = z_axis;
    // Shepperd-style extraction; inputs are orthonormal by construction.
    const double trace = r.trace();
    Eigen::Vector4d q;
    if (trace > 0.0) {
        const double s = std::sqrt(trace + 1.0) * 2.0;
        q << 0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s;
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        const double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
        q << (r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s;
    } else if (r(1, 1) > r(2, 2)) {
        const double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
        q << (r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s;
    } else {
        const double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
        q << (r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s;
    }
    return q.normalized();
}

// Surface-aligned Gaussian: thin along `normal`, tangent frame from `normal`.
Gaussian surface_gaussian(const Eigen::Vector3d& pos, const Eigen::Vector3d& normal,
                          double tangent_scale, double normal_scale, const Eigen::Vector3d& color,
                          double opacity) {
    Eigen::Vector3d helper = std::abs(normal.z()) < 0.9 ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d::UnitX();
    const Eigen::Vector3d t0 = normal.cross(helper).normalized();
    const Eigen::Vector3d t1 = normal.cross(t0).normalized();
    Gaussian g;
    g.position = pos;
    g.rotation = quat_from_axes(t0, t1, normal);
    g.log_scale = Eigen::Vector3d(std::log(tangent_scale), std::log(tangent_scale), std::log(normal_scale));
    g.opacity_logit = logit(opacity);
    g.color = color;
    return g;
}

Eigen::Vector3d checker_color(const Eigen::Vector3d& p, int face) {
    const int parity = (static_cast<int>(std::floor(p.x() * 4.0 + 8.0)) +
                        static_cast<int>(std::floor(p.y() * 4.0 + 8.0)) +
                        static_cast<int>(std::floor(p.z() * 4.0 + 8.0))) % 2;
    static const Eigen::Vector3d palette[6] = {
        {0.85, 0.25, 0.2}, {0.2, 0.6, 0.85}, {0.9, 0.75, 0.2},
        {0.3, 0.75, 0.35}, {0.75, 0.35, 0.8}, {0.9, 0.5, 0.25}};
    const Eigen::Vector3d base = palette[face % 6];
    return parity == 0 ? base : Eigen::Vector3d(0.15, 0.15, 0.18);
}

} // namespace

std::vector<Camera> ring_cameras(int n_views, int image_size, const Eigen::Vector3d& lo,
                                 const Eigen::Vector3d& hi) {
    const Eigen::Vector3d center = 0.5 * (lo + hi);
    const double radius = std::max((hi - lo).norm() * 1.8, 1e-3);
    const double focal = image_size * 1.4;
    std::vector<Camera> cams;
    cams.reserve(static_cast<std::size_t>(n_views));
    for (int k = 0; k < n_views; ++k) {
        const double azimuth = 2.0 * M_PI * k / n_views;
        const double elevation = (k % 2 == 0 ? 0.35 : -0.25) + 0.1 * std::sin(3.0 * azimuth);
        const Eigen::Vector3d eye =
            center + radius * Eigen::Vector3d(std::cos(azimuth) * std::cos(elevation),
                                              std::sin(azimuth) * std::cos(elevation),
                                              std::sin(elevation));
        cams.push_back(look_at(eye, center, Eigen::Vector3d::UnitZ(), focal, focal, image_size, image_size));
    }
    return cams;
}

DemoScene build_demo_scene(const DemoSceneConfig& cfg, const RenderConfig& render_cfg) {
    Rng rng(cfg.seed);
    DemoScene scene;

    const int cube_count = cfg.pretrained_count * 3 / 5;
    const int sphere_count = cfg.pretrained_count - cube_count;

    // Checker-textured cube, half-side 0.5, centered at the origin.
    const double half = 0.5;
    for (int i = 0; i < cube_count; ++i) {
        const int face = static_cast<int>(rng.uniform_int(0, 5));
        const int axis = face / 2;
        const double sign = (face % 2 == 0) ? 1.0 : -1.0;
        Eigen::Vector3d p;
        p[axis] = sign * half;
        p[(axis + 1) % 3] = rng.uniform(-half, half);
        p[(axis + 2) % 3] = rng.uniform(-half, half);
        Eigen::Vector3d normal = Eigen::Vector3d::Zero();
        normal[axis] = sign;
        scene.pretrained.gaussians.push_back(
            surface_gaussian(p, normal, 0.045, 0.008, checker_color(p, face), 0.92));
    }

    // Smooth-shaded sphere beside the cube.
    const Eigen::Vector3d sphere_center(0.55, -0.45, 0.5);
    const double sphere_radius = 0.32;
    for (int i = 0; i < sphere_count; ++i) {
        const double z = rng.uniform(-1.0, 1.0);
        const double phi = rng.uniform(0.0, 2.0 * M_PI);
        const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
        const Eigen::Vector3d normal(rxy * std::cos(phi), rxy * std::sin(phi), z);
        const Eigen::Vector3d p = sphere_center + sphere_radius * normal;
        const Eigen::Vector3d color = 0.55 * (normal + Eigen::Vector3d::Ones()) * 0.5 +
                                      Eigen::Vector3d(0.2, 0.25, 0.3);
        scene.pretrained.gaussians.push_back(surface_gaussian(p, normal, 0.035, 0.006, color, 0.9));
    }

    cloud_bounds(scene.pretrained, scene.bounds_lo, scene.bounds_hi);

    const std::vector<Camera> cams =
        ring_cameras(cfg.n_views, cfg.image_size, scene.bounds_lo, scene.bounds_hi);
    for (const Camera& cam : cams) {
        RenderOutput out = render(scene.pretrained, cam, render_cfg);
        TrainingView view;
        view.cam = cam;
        view.color = std::move(out.color);
        view.depth = std::move(out.depth);
        view.normal = std::move(out.normal);
        view.alpha = std::move(out.alpha);
        scene.views.push_back(std::move(view));
    }
    return scene;
}

GaussianCloud demo_object(int kind, std::size_t count, std::uint64_t seed) {
    Rng rng(seed + static_cast<std::uint64_t>(kind) * 7919);
    GaussianCloud cloud;
    cloud.gaussians.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Eigen::Vector3d p, normal, color;
        switch (kind % 4) {
        case 0: { // cube shell
            const int face = static_cast<int>(rng.uniform_int(0, 5));
            const int axis = face / 2;
            const double sign = (face % 2 == 0) ? 1.0 : -1.0;
            p[axis] = sign * 0.5;
            p[(axis + 1) % 3] = rng.uniform(-0.5, 0.5);
            p[(axis + 2) % 3] = rng.uniform(-0.5, 0.5);
            normal = Eigen::Vector3d::Zero();
            normal[axis] = sign;
            color = checker_color(p, face);
            break;
        }
        case 1: { // sphere shell
            const double z = rng.uniform(-1.0, 1.0);
            const double phi = rng.uniform(0.0, 2.0 * M_PI);
            const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
            normal = Eigen::Vector3d(rxy * std::cos(phi), rxy * std::sin(phi), z);
            p = 0.55 * normal;
            color = (normal + Eigen::Vector3d::Ones()) * 0.5;
            break;
        }
        case 2: { // open cylinder
            const double phi = rng.uniform(0.0, 2.0 * M_PI);
            const double z = rng.uniform(-0.5, 0.5);
            normal = Eigen::Vector3d(std::cos(phi), std::sin(phi), 0.0);
            p = Eigen::Vector3d(0.4 * std::cos(phi), 0.4 * std::sin(phi), z);
            color = Eigen::Vector3d(0.5 + 0.5 * std::sin(phi), 0.4, 0.5 + z);
            break;
        }
        default: { // twin spheres
            const double z = rng.uniform(-1.0, 1.0);
            const double phi = rng.uniform(0.0, 2.0 * M_PI);
            const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
            normal = Eigen::Vector3d(rxy * std::cos(phi), rxy * std::sin(phi), z);
            const Eigen::Vector3d offset = (i % 2 == 0) ? Eigen::Vector3d(0.35, 0, 0)
                                                        : Eigen::Vector3d(-0.35, 0, 0);
            p = offset + 0.3 * normal;
            color = (i % 2 == 0) ? Eigen::Vector3d(0.85, 0.3, 0.2) : Eigen::Vector3d(0.2, 0.4, 0.85);
            break;
        }
        }
        cloud.gaussians.push_back(surface_gaussian(p, normal, 0.06, 0.01, color, 0.9));
    }
    return cloud;
}

} // namespace vxs
