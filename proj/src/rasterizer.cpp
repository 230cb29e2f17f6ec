// SPDX-License-Identifier: Apache-2.0
#include "vxs/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vxs {
namespace {

struct Prepared {
    bool active = false;
    Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov2d = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d cov2d_inv = Eigen::Matrix2d::Zero();
    double depth = 0.0;
    double opacity = 0.0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    Eigen::Vector3d normal = Eigen::Vector3d::Zero();
    // Cached intermediates for the backward pass.
    Eigen::Vector3d t_cam = Eigen::Vector3d::Zero();     // camera-space center
    Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();   // R(q_hat)
    Eigen::Vector3d s = Eigen::Vector3d::Ones();         // activated scale
    Eigen::Matrix3d sigma = Eigen::Matrix3d::Identity(); // world covariance
    Eigen::Matrix<double, 2, 3> m = Eigen::Matrix<double, 2, 3>::Zero(); // J * W
    int normal_axis = 0;
    double normal_flip = 1.0;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1; // inclusive pixel bounds
};

// Largest eigenvalue of a symmetric 2x2.
double max_eigenvalue(const Eigen::Matrix2d& c) {
    const double tr = 0.5 * (c(0, 0) + c(1, 1));
    const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
    const double disc = std::sqrt(std::max(tr * tr - det, 0.0));
    return tr + disc;
}

double min_eigenvalue(const Eigen::Matrix2d& c) {
    const double tr = 0.5 * (c(0, 0) + c(1, 1));
    const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
    const double disc = std::sqrt(std::max(tr * tr - det, 0.0));
    return tr - disc;
}

std::vector<Prepared> prepare(const GaussianCloud& cloud, const Camera& cam, const RenderConfig& cfg) {
    cam.validate();
    const Eigen::Vector3d cam_center = cam.center();
    std::vector<Prepared> prep(cloud.count());
    for (std::size_t i = 0; i < cloud.count(); ++i) {
        const Gaussian& g = cloud[i];
        Prepared& p = prep[i];
        p.t_cam = cam.R * g.position + cam.t;
        if (p.t_cam.z() <= cfg.znear) continue;

        p.rot = rotation_matrix(g.rotation);
        p.s = g.scale();
        p.sigma = p.rot * p.s.array().square().matrix().asDiagonal() * p.rot.transpose();

        const double x = p.t_cam.x(), y = p.t_cam.y(), z = p.t_cam.z();
        Eigen::Matrix<double, 2, 3> jac;
        jac << cam.fx / z, 0.0, -cam.fx * x / (z * z),
            0.0, cam.fy / z, -cam.fy * y / (z * z);
        p.m = jac * cam.R;
        p.cov2d = p.m * p.sigma * p.m.transpose();
        p.cov2d(0, 0) += cfg.dilation;
        p.cov2d(1, 1) += cfg.dilation;

        const double lmax = max_eigenvalue(p.cov2d);
        const double lmin = min_eigenvalue(p.cov2d);
        if (!(lmin > 0.0) || lmax / lmin > cfg.max_condition) continue;

        p.mean2d = Eigen::Vector2d(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy);
        p.depth = z;
        p.opacity = g.opacity();
        p.color = g.color;

        int k = 0;
        for (int a = 1; a < 3; ++a) {
            if (p.s[a] < p.s[k]) k = a;
        }
        p.normal_axis = k;
        Eigen::Vector3d view_dir = g.position - cam_center;
        const double vn = view_dir.norm();
        view_dir = vn < 1e-12 ? Eigen::Vector3d(cam.R.row(2)) : Eigen::Vector3d(view_dir / vn);
        p.normal_flip = (p.rot.col(k).dot(view_dir) > 0.0) ? -1.0 : 1.0;
        p.normal = p.normal_flip * p.rot.col(k);

        // Pixels outside this radius satisfy alpha' < alpha_cutoff, so the
        // bounding box never changes the blend result.
        if (p.opacity < cfg.alpha_cutoff) continue;
        const double sig_max = std::log(p.opacity / cfg.alpha_cutoff);
        const double radius = std::sqrt(2.0 * std::max(sig_max, 0.0) * lmax) + 1.0;
        p.x0 = std::max(0, static_cast<int>(std::floor(p.mean2d.x() - radius)));
        p.x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(p.mean2d.x() + radius)));
        p.y0 = std::max(0, static_cast<int>(std::floor(p.mean2d.y() - radius)));
        p.y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(p.mean2d.y() + radius)));
        if (p.x0 > p.x1 || p.y0 > p.y1) continue;

        const double det = p.cov2d(0, 0) * p.cov2d(1, 1) - p.cov2d(0, 1) * p.cov2d(1, 0);
        p.cov2d_inv << p.cov2d(1, 1) / det, -p.cov2d(0, 1) / det,
            -p.cov2d(1, 0) / det, p.cov2d(0, 0) / det;
        p.active = true;
    }
    return prep;
}

// Active indices sorted front to back by camera z, ties on original index.
std::vector<std::uint32_t> depth_order(const std::vector<Prepared>& prep) {
    std::vector<std::uint32_t> order;
    order.reserve(prep.size());
    for (std::uint32_t i = 0; i < prep.size(); ++i) {
        if (prep[i].active) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&prep](std::uint32_t a, std::uint32_t b) {
        return prep[a].depth < prep[b].depth;
    });
    return order;
}

struct TileGrid {
    int tiles_x = 0, tiles_y = 0, tile = 16;
    std::vector<std::vector<std::uint32_t>> bins; // depth-ordered per tile
};

TileGrid bin_tiles(const std::vector<Prepared>& prep, const std::vector<std::uint32_t>& order,
                   int width, int height, int tile) {
    TileGrid grid;
    grid.tile = tile;
    grid.tiles_x = (width + tile - 1) / tile;
    grid.tiles_y = (height + tile - 1) / tile;
    grid.bins.resize(static_cast<std::size_t>(grid.tiles_x) * grid.tiles_y);
    for (std::uint32_t idx : order) {
        const Prepared& p = prep[idx];
        const int tx0 = p.x0 / tile, tx1 = p.x1 / tile;
        const int ty0 = p.y0 / tile, ty1 = p.y1 / tile;
        for (int ty = ty0; ty <= ty1; ++ty) {
            for (int tx = tx0; tx <= tx1; ++tx) {
                grid.bins[static_cast<std::size_t>(ty) * grid.tiles_x + tx].push_back(idx);
            }
        }
    }
    return grid;
}

struct BlendSample {
    std::uint32_t idx;
    double alpha;       // alpha' after falloff
    double falloff;     // exp(-sigma)
    double trans;       // T before this sample
    double weight;      // alpha' * T
    Eigen::Vector2d d;  // pixel - mean2d
};

// Replays front-to-back blending for one pixel. Returns the number of samples.
template <typename Sink>
int blend_pixel(const std::vector<Prepared>& prep, const std::vector<std::uint32_t>& bin,
                int px, int py, const RenderConfig& cfg, Sink&& sink) {
    double transmittance = 1.0;
    int count = 0;
    for (std::uint32_t idx : bin) {
        const Prepared& p = prep[idx];
        if (px < p.x0 || px > p.x1 || py < p.y0 || py > p.y1) continue;
        const Eigen::Vector2d d(px - p.mean2d.x(), py - p.mean2d.y());
        const double sigma = 0.5 * d.dot(p.cov2d_inv * d);
        const double falloff = std::exp(-sigma);
        const double alpha = p.opacity * falloff;
        if (alpha < cfg.alpha_cutoff) continue;
        sink(BlendSample{idx, alpha, falloff, transmittance, alpha * transmittance, d});
        ++count;
        transmittance *= 1.0 - alpha;
        if (transmittance < cfg.transmittance_cutoff) break;
    }
    return count;
}

// d cov2d^-1 / d cov2d contraction: dL/dC = -Cinv * (dL/dCinv) * Cinv.
Eigen::Matrix2d inverse_grad(const Eigen::Matrix2d& cinv, const Eigen::Matrix2d& g) {
    return -cinv * g * cinv;
}

// dL/dq for R(q / |q|) given dL/dR, evaluated at the raw quaternion.
Eigen::Vector4d quaternion_grad(const Eigen::Vector4d& q_raw, const Eigen::Matrix3d& d_rot) {
    Eigen::Vector4d q = q_raw;
    const double n = q.norm();
    if (n < 1e-12) return Eigen::Vector4d::Zero();
    q /= n;
    const double w = q[0], x = q[1], y = q[2], z = q[3];

    Eigen::Matrix3d dw, dx, dy, dz;
    dw << 0, -z, y,
        z, 0, -x,
        -y, x, 0;
    dx << 0, y, z,
        y, -2 * x, -w,
        z, w, -2 * x;
    dy << -2 * y, x, w,
        x, 0, z,
        -w, z, -2 * y;
    dz << -2 * z, -w, x,
        w, -2 * z, y,
        x, y, 0;

    Eigen::Vector4d g_unit;
    g_unit[0] = 2.0 * (d_rot.array() * dw.array()).sum();
    g_unit[1] = 2.0 * (d_rot.array() * dx.array()).sum();
    g_unit[2] = 2.0 * (d_rot.array() * dy.array()).sum();
    g_unit[3] = 2.0 * (d_rot.array() * dz.array()).sum();

    // Through the normalization q_hat = q / |q|.
    return (g_unit - q * q.dot(g_unit)) / n;
}

// Per-Gaussian raw accumulators gathered over a tile's pixels.
struct RawAccum {
    Eigen::Matrix2d d_cov_inv = Eigen::Matrix2d::Zero();
    Eigen::Vector2d d_mean2d = Eigen::Vector2d::Zero();
    double d_depth = 0.0;
    double d_opacity = 0.0;
    Eigen::Vector3d d_color = Eigen::Vector3d::Zero();
    Eigen::Vector3d d_normal = Eigen::Vector3d::Zero();
};

} // namespace

std::optional<Projection> project(const Gaussian& g, const Camera& cam, const RenderConfig& cfg) {
    cam.validate();
    if (!g.position.allFinite() || !g.rotation.allFinite() || !g.log_scale.allFinite()) {
        throw InvalidParameter("project: non-finite Gaussian parameters");
    }
    const Eigen::Vector3d t_cam = cam.R * g.position + cam.t;
    if (t_cam.z() <= cfg.znear) return std::nullopt;

    const Eigen::Matrix3d sigma = covariance_from(g.rotation, g.scale());
    const double x = t_cam.x(), y = t_cam.y(), z = t_cam.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx / z, 0.0, -cam.fx * x / (z * z),
        0.0, cam.fy / z, -cam.fy * y / (z * z);
    const Eigen::Matrix<double, 2, 3> m = jac * cam.R;

    Projection out;
    out.mean2d = Eigen::Vector2d(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy);
    out.cov2d = m * sigma * m.transpose();
    out.cov2d(0, 0) += cfg.dilation;
    out.cov2d(1, 1) += cfg.dilation;
    out.depth = z;
    return out;
}

RenderOutput render(const GaussianCloud& cloud, const Camera& cam, const RenderConfig& cfg) {
    RenderOutput out;
    out.color = Image(cam.width, cam.height);
    out.depth = ScalarMap(cam.width, cam.height);
    out.normal = Image(cam.width, cam.height);
    out.alpha = ScalarMap(cam.width, cam.height);

    const std::vector<Prepared> prep = prepare(cloud, cam, cfg);
    const std::vector<std::uint32_t> order = depth_order(prep);
    const TileGrid grid = bin_tiles(prep, order, cam.width, cam.height, cfg.tile_size);

    // Tiles write disjoint pixels, so the result is thread-count independent.
    parallel_for(grid.bins.size(), cfg.threads, [&](std::size_t tile_idx) {
        const auto& bin = grid.bins[tile_idx];
        if (bin.empty()) return;
        const int tx = static_cast<int>(tile_idx) % grid.tiles_x;
        const int ty = static_cast<int>(tile_idx) / grid.tiles_x;
        const int px0 = tx * grid.tile, px1 = std::min(cam.width, px0 + grid.tile);
        const int py0 = ty * grid.tile, py1 = std::min(cam.height, py0 + grid.tile);
        for (int py = py0; py < py1; ++py) {
            for (int px = px0; px < px1; ++px) {
                Eigen::Vector3d c = Eigen::Vector3d::Zero();
                Eigen::Vector3d n = Eigen::Vector3d::Zero();
                double d = 0.0, a = 0.0;
                blend_pixel(prep, bin, px, py, cfg, [&](const BlendSample& s) {
                    const Prepared& p = prep[s.idx];
                    c += p.color * s.weight;
                    n += p.normal * s.weight;
                    d += p.depth * s.weight;
                    a += s.weight;
                });
                for (int ch = 0; ch < 3; ++ch) {
                    out.color.at(px, py, ch) = c[ch];
                    out.normal.at(px, py, ch) = n[ch];
                }
                out.depth.at(px, py) = d;
                out.alpha.at(px, py) = a;
            }
        }
    });
    return out;
}

ParamGradients render_backward(const GaussianCloud& cloud, const Camera& cam,
                               const Image& d_color, const ScalarMap& d_depth,
                               const Image& d_normal, const RenderConfig& cfg) {
    if (d_color.width != cam.width || d_color.height != cam.height) {
        throw InvalidParameter("render_backward: gradient image size mismatch");
    }
    require_same_shape(d_color, d_normal, "render_backward");
    if (d_depth.width != cam.width || d_depth.height != cam.height) {
        throw InvalidParameter("render_backward: depth gradient size mismatch");
    }
    for (double v : d_color.data) require_finite(v, "render_backward upstream color gradient");
    for (double v : d_depth.data) require_finite(v, "render_backward upstream depth gradient");
    for (double v : d_normal.data) require_finite(v, "render_backward upstream normal gradient");

    const std::size_t n = cloud.count();
    ParamGradients grads;
    grads.resize(n);
    if (n == 0) return grads;

    const std::vector<Prepared> prep = prepare(cloud, cam, cfg);
    const std::vector<std::uint32_t> order = depth_order(prep);
    const TileGrid grid = bin_tiles(prep, order, cam.width, cam.height, cfg.tile_size);

    std::vector<std::vector<RawAccum>> tile_accum(grid.bins.size());

    parallel_for(grid.bins.size(), cfg.threads, [&](std::size_t tile_idx) {
        const auto& bin = grid.bins[tile_idx];
        if (bin.empty()) return;
        std::vector<RawAccum>& acc = tile_accum[tile_idx];
        acc.assign(n, RawAccum{});

        const int tx = static_cast<int>(tile_idx) % grid.tiles_x;
        const int ty = static_cast<int>(tile_idx) / grid.tiles_x;
        const int px0 = tx * grid.tile, px1 = std::min(cam.width, px0 + grid.tile);
        const int py0 = ty * grid.tile, py1 = std::min(cam.height, py0 + grid.tile);

        std::vector<BlendSample> samples;
        samples.reserve(64);

        for (int py = py0; py < py1; ++py) {
            for (int px = px0; px < px1; ++px) {
                const Eigen::Vector3d g_c(d_color.at(px, py, 0), d_color.at(px, py, 1), d_color.at(px, py, 2));
                const Eigen::Vector3d g_n(d_normal.at(px, py, 0), d_normal.at(px, py, 1), d_normal.at(px, py, 2));
                const double g_d = d_depth.at(px, py);

                samples.clear();
                blend_pixel(prep, bin, px, py, cfg, [&](const BlendSample& s) { samples.push_back(s); });
                if (samples.empty()) continue;

                // Suffix payload sums: S = sum_{j>i} u_j w_j.
                Eigen::Vector3d s_color = Eigen::Vector3d::Zero();
                Eigen::Vector3d s_normal = Eigen::Vector3d::Zero();
                double s_depth = 0.0;
                for (int si = static_cast<int>(samples.size()) - 1; si >= 0; --si) {
                    const BlendSample& s = samples[si];
                    const Prepared& p = prep[s.idx];
                    RawAccum& a = acc[s.idx];
                    const double t_i = s.trans;

                    a.d_color += g_c * s.weight;
                    a.d_normal += g_n * s.weight;
                    a.d_depth += g_d * s.weight;

                    const double direct = g_c.dot(p.color) + g_n.dot(p.normal) + g_d * p.depth;
                    const double behind = g_c.dot(s_color) + g_n.dot(s_normal) + g_d * s_depth;
                    const double d_alpha = direct * t_i - behind / (1.0 - s.alpha);

                    a.d_opacity += d_alpha * s.falloff;
                    const double d_sigma = -d_alpha * s.alpha;
                    a.d_cov_inv += (0.5 * d_sigma) * (s.d * s.d.transpose());
                    a.d_mean2d += -d_sigma * (p.cov2d_inv * s.d);

                    s_color += p.color * s.weight;
                    s_normal += p.normal * s.weight;
                    s_depth += p.depth * s.weight;
                }
            }
        }
    });

    // Merge tiles in index order, then convert raw accumulators to parameter
    // gradients (the conversion is linear in the accumulated quantities).
    std::vector<RawAccum> total(n);
    for (const auto& acc : tile_accum) {
        if (acc.empty()) continue;
        for (std::size_t i = 0; i < n; ++i) {
            total[i].d_cov_inv += acc[i].d_cov_inv;
            total[i].d_mean2d += acc[i].d_mean2d;
            total[i].d_depth += acc[i].d_depth;
            total[i].d_opacity += acc[i].d_opacity;
            total[i].d_color += acc[i].d_color;
            total[i].d_normal += acc[i].d_normal;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        const Prepared& p = prep[i];
        if (!p.active) continue;
        const RawAccum& a = total[i];
        const Gaussian& g = cloud[i];

        grads.color[i] = a.d_color;

        const double o = p.opacity;
        grads.opacity_logit[i] = a.d_opacity * o * (1.0 - o);

        // cov2d^-1 -> cov2d -> (Sigma, J).
        const Eigen::Matrix2d g_cov_inv = 0.5 * (a.d_cov_inv + a.d_cov_inv.transpose());
        const Eigen::Matrix2d g_cov = inverse_grad(p.cov2d_inv, g_cov_inv);
        const Eigen::Matrix2d g_cov_sym = 0.5 * (g_cov + g_cov.transpose());

        const Eigen::Matrix3d g_sigma = p.m.transpose() * g_cov_sym * p.m;
        const Eigen::Matrix<double, 2, 3> g_m = 2.0 * g_cov_sym * p.m * p.sigma;
        const Eigen::Matrix<double, 2, 3> g_jac = g_m * cam.R.transpose();

        // Camera-space position gradient: projection of the mean, the
        // Jacobian's dependence on t, and the depth payload.
        const double x = p.t_cam.x(), y = p.t_cam.y(), z = p.t_cam.z();
        Eigen::Matrix<double, 2, 3> jac;
        jac << cam.fx / z, 0.0, -cam.fx * x / (z * z),
            0.0, cam.fy / z, -cam.fy * y / (z * z);
        Eigen::Vector3d g_t = jac.transpose() * a.d_mean2d;
        g_t.x() += g_jac(0, 2) * (-cam.fx / (z * z));
        g_t.y() += g_jac(1, 2) * (-cam.fy / (z * z));
        g_t.z() += g_jac(0, 0) * (-cam.fx / (z * z)) + g_jac(0, 2) * (2.0 * cam.fx * x / (z * z * z)) +
                   g_jac(1, 1) * (-cam.fy / (z * z)) + g_jac(1, 2) * (2.0 * cam.fy * y / (z * z * z));
        g_t.z() += a.d_depth;
        grads.position[i] = cam.R.transpose() * g_t;

        // Sigma = R diag(s^2) R^T.
        const Eigen::Matrix3d rt_gs_r = p.rot.transpose() * g_sigma * p.rot;
        for (int k = 0; k < 3; ++k) {
            grads.log_scale[i][k] = 2.0 * p.s[k] * p.s[k] * rt_gs_r(k, k);
        }
        Eigen::Matrix3d g_rot = 2.0 * g_sigma * p.rot * p.s.array().square().matrix().asDiagonal();
        g_rot.col(p.normal_axis) += p.normal_flip * a.d_normal;
        grads.rotation[i] = quaternion_grad(g.rotation, g_rot);

        grads.pos_grad_mag[i] = Eigen::Vector2d(a.d_mean2d.x() * cam.width * 0.5,
                                                a.d_mean2d.y() * cam.height * 0.5)
                                    .norm();
    }
    return grads;
}

} // namespace vxs
