// SPDX-License-Identifier: Apache-2.0
#include "vxs/edc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <ostream>

namespace vxs {
namespace {

Eigen::Matrix<double, 14, 1> pack_raw(const Gaussian& g) {
    Eigen::Matrix<double, 14, 1> p;
    p.segment<3>(0) = g.position;
    p.segment<4>(3) = g.rotation;
    p.segment<3>(7) = g.log_scale;
    p[10] = g.opacity_logit;
    p.segment<3>(11) = g.color;
    return p;
}

void unpack_raw(const Eigen::Matrix<double, 14, 1>& p, Gaussian& g) {
    g.position = p.segment<3>(0);
    g.rotation = p.segment<4>(3);
    g.log_scale = p.segment<3>(7);
    g.opacity_logit = p[10];
    g.color = p.segment<3>(11);
}

Eigen::Matrix<double, 14, 1> pack_grads(const ParamGradients& grads, std::size_t i) {
    Eigen::Matrix<double, 14, 1> p;
    p.segment<3>(0) = grads.position[i];
    p.segment<4>(3) = grads.rotation[i];
    p.segment<3>(7) = grads.log_scale[i];
    p[10] = grads.opacity_logit[i];
    p.segment<3>(11) = grads.color[i];
    return p;
}

Eigen::Matrix<double, 14, 1> lr_vector(const GroupLearningRates& lrs) {
    Eigen::Matrix<double, 14, 1> lr;
    lr.segment<3>(0).setConstant(lrs.position);
    lr.segment<4>(3).setConstant(lrs.rotation);
    lr.segment<3>(7).setConstant(lrs.log_scale);
    lr[10] = lrs.opacity;
    lr.segment<3>(11).setConstant(lrs.color);
    return lr;
}

std::size_t highest_opacity_index(const GaussianCloud& cloud) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < cloud.count(); ++i) {
        if (cloud[i].opacity_logit > cloud[best].opacity_logit) best = i;
    }
    return best;
}

} // namespace

GaussianCloud farthest_gaussian_sample(const GaussianCloud& cloud, std::size_t k) {
    if (k < 1 || k > cloud.count()) {
        throw InvalidParameter("farthest_gaussian_sample: k out of range");
    }
    const std::size_t n = cloud.count();
    std::vector<bool> selected(n, false);
    std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());

    std::size_t current = highest_opacity_index(cloud);
    selected[current] = true;
    for (std::size_t picked = 1; picked < k; ++picked) {
        std::size_t far_idx = 0;
        double far_dist = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (selected[i]) continue;
            const double d = (cloud[i].position - cloud[current].position).squaredNorm();
            if (d < min_dist[i]) min_dist[i] = d;
            if (min_dist[i] > far_dist) {
                far_dist = min_dist[i];
                far_idx = i;
            }
        }
        current = far_idx;
        selected[current] = true;
    }

    GaussianCloud out;
    out.gaussians.reserve(k);
    for (std::size_t i = 0; i < n; ++i) {
        if (selected[i]) out.gaussians.push_back(cloud[i]);
    }
    return out;
}

void adam_step(GaussianCloud& cloud, const ParamGradients& grads, OptimizerState& state,
               const GroupLearningRates& lrs, double beta1, double beta2, double eps) {
    const std::size_t n = cloud.count();
    if (grads.size() != n) throw InvalidParameter("adam_step: gradient cardinality mismatch");
    if (state.size() != n) throw InvalidParameter("adam_step: optimizer state cardinality mismatch");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    const Eigen::Matrix<double, 14, 1> lr = lr_vector(lrs);

    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Matrix<double, 14, 1> g = pack_grads(grads, i);
        if (!g.allFinite()) throw NumericError("adam_step: non-finite gradient");
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g.cwiseProduct(g);
        const Eigen::Matrix<double, 14, 1> m_hat = state.m[i] / bc1;
        const Eigen::Matrix<double, 14, 1> v_hat = state.v[i] / bc2;
        Eigen::Matrix<double, 14, 1> denom = v_hat.cwiseSqrt();
        denom.array() += eps;
        Eigen::Matrix<double, 14, 1> p = pack_raw(cloud[i]);
        p -= lr.cwiseProduct(m_hat.cwiseQuotient(denom));
        unpack_raw(p, cloud[i]);
        cloud[i].renormalize_rotation();
    }
}

GaussianCloud densify_and_prune(const GaussianCloud& cloud, const ParamGradients& grads,
                                const EDCConfig& cfg, OptimizerState* state, RefineStats* stats) {
    cfg.validate();
    if (grads.size() != cloud.count()) {
        throw InvalidParameter("densify_and_prune: gradient cardinality mismatch");
    }
    const double extent = cfg.scene_extent;
    const double too_large = cfg.too_large_frac * extent;
    const double tau_s = cfg.scale_threshold > 0.0 ? cfg.scale_threshold : 0.01 * extent;

    RefineStats local;

    // Pruning.
    std::vector<std::size_t> keep;
    keep.reserve(cloud.count());
    for (std::size_t i = 0; i < cloud.count(); ++i) {
        const double max_scale = cloud[i].scale().maxCoeff();
        if (cloud[i].opacity() < cfg.opacity_prune || max_scale > too_large) {
            ++local.pruned;
            continue;
        }
        keep.push_back(i);
    }

    const std::size_t count_after_prune = keep.size();
    const std::size_t delta_n =
        cfg.n_max > static_cast<int>(count_after_prune) ? cfg.n_max - count_after_prune : 0;
    local.delta_n = static_cast<int>(delta_n);

    // Candidates above the gradient threshold, strongest first.
    std::vector<std::size_t> candidates;
    for (std::size_t i : keep) {
        if (grads.pos_grad_mag[i] > cfg.grad_threshold) candidates.push_back(i);
    }
    std::stable_sort(candidates.begin(), candidates.end(), [&grads](std::size_t a, std::size_t b) {
        return grads.pos_grad_mag[a] > grads.pos_grad_mag[b];
    });
    if (candidates.size() > delta_n) candidates.resize(delta_n);
    std::vector<bool> densify(cloud.count(), false);
    for (std::size_t i : candidates) densify[i] = true;

    GaussianCloud out;
    out.gaussians.reserve(count_after_prune + candidates.size());
    std::vector<Gaussian> appended;
    OptimizerState next;
    std::vector<Eigen::Matrix<double, 14, 1>> next_m, next_v, app_m, app_v;

    const Eigen::Matrix<double, 14, 1> zero = Eigen::Matrix<double, 14, 1>::Zero();
    for (std::size_t i : keep) {
        const Gaussian& g = cloud[i];
        if (!densify[i]) {
            out.gaussians.push_back(g);
            if (state) {
                next_m.push_back(state->m[i]);
                next_v.push_back(state->v[i]);
            }
            continue;
        }
        const Eigen::Vector3d s = g.scale();
        int major = 0;
        for (int a = 1; a < 3; ++a) {
            if (s[a] > s[major]) major = a;
        }
        const double sigma_major = s[major];
        if (sigma_major > tau_s) {
            // Over-reconstruction: split into two smaller copies along the major axis.
            const Eigen::Vector3d axis = rotation_matrix(g.rotation).col(major);
            Gaussian child = g;
            child.log_scale.array() -= std::log(1.6);
            Gaussian a = child, b = child;
            a.position = g.position + 0.5 * sigma_major * axis;
            b.position = g.position - 0.5 * sigma_major * axis;
            out.gaussians.push_back(a);
            appended.push_back(b);
            if (state) {
                next_m.push_back(zero);
                next_v.push_back(zero);
                app_m.push_back(zero);
                app_v.push_back(zero);
            }
            ++local.split;
        } else {
            // Under-reconstruction: clone, nudged along the positional gradient.
            out.gaussians.push_back(g);
            Gaussian copy = g;
            const double gnorm = grads.position[i].norm();
            if (gnorm > 0.0) {
                copy.position += 0.01 * sigma_major * grads.position[i] / gnorm;
            }
            appended.push_back(copy);
            if (state) {
                next_m.push_back(state->m[i]);
                next_v.push_back(state->v[i]);
                app_m.push_back(zero);
                app_v.push_back(zero);
            }
            ++local.cloned;
        }
    }
    for (std::size_t i = 0; i < appended.size(); ++i) {
        out.gaussians.push_back(appended[i]);
        if (state) {
            next_m.push_back(app_m[i]);
            next_v.push_back(app_v[i]);
        }
    }
    if (state) {
        state->m = std::move(next_m);
        state->v = std::move(next_v);
    }
    if (stats) *stats = local;
    return out;
}

GaussianCloud fit_fixed_count(const GaussianCloud& pretrained, const std::vector<TrainingView>& views,
                              const EDCConfig& cfg_in, const FeatureExtractor& fx, std::ostream* log) {
    EDCConfig cfg = cfg_in;
    cfg.validate();
    if (views.empty()) throw InvalidParameter("fit_fixed_count: no training views");
    if (pretrained.empty()) throw InvalidParameter("fit_fixed_count: empty pretrained cloud");

    if (cfg.scene_extent <= 0.0) {
        Eigen::Vector3d lo, hi;
        cloud_bounds(pretrained, lo, hi);
        cfg.scene_extent = std::max((hi - lo).norm(), 1e-6);
    }

    // Initialization per the budget branch.
    GaussianCloud cloud;
    if (pretrained.count() <= static_cast<std::size_t>(cfg.n_max)) {
        cloud = pretrained;
    } else {
        const auto k = static_cast<std::size_t>(cfg.sample_fraction * cfg.n_max);
        cloud = farthest_gaussian_sample(pretrained, std::max<std::size_t>(k, 1));
    }

    OptimizerState state;
    state.resize(cloud.count());
    GroupLearningRates lrs;
    lrs.position = cfg.lr_position * cfg.scene_extent;
    lrs.rotation = cfg.lr_rotation;
    lrs.log_scale = cfg.lr_log_scale;
    lrs.opacity = cfg.lr_opacity;
    lrs.color = cfg.lr_color;

    auto view_loss = [&](const TrainingView& view, const RenderOutput& out) {
        double loss = image_loss(out.color, view.color, fx);
        if (cfg.use_depth_loss && view.depth) {
            loss += depth_loss(out.depth, *view.depth, view.alpha ? &*view.alpha : nullptr);
        }
        if (cfg.use_normal_loss && view.normal) {
            loss += normal_loss(out.normal, *view.normal, view.alpha ? &*view.alpha : nullptr);
        }
        return loss;
    };

    auto emit = [&](int iter, double loss, const RefineStats& st) {
        if (!log) return;
        (*log) << iter << ',' << loss << ',' << cloud.count() << ',' << st.delta_n << ',' << st.pruned
               << ',' << st.split << ',' << st.cloned << '\n';
    };

    {
        const RenderOutput out0 = render(cloud, views[0].cam, cfg.render);
        emit(0, view_loss(views[0], out0), RefineStats{});
    }

    std::deque<double> history;
    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        const TrainingView& view = views[static_cast<std::size_t>(iter - 1) % views.size()];
        const RenderOutput out = render(cloud, view.cam, cfg.render);
        const double loss = view_loss(view, out);

        const Image d_color = image_loss_backward(out.color, view.color, fx);
        ScalarMap d_depth(view.cam.width, view.cam.height);
        Image d_normal(view.cam.width, view.cam.height);
        if (cfg.use_depth_loss && view.depth) {
            d_depth = depth_loss_backward(out.depth, *view.depth, view.alpha ? &*view.alpha : nullptr);
        }
        if (cfg.use_normal_loss && view.normal) {
            d_normal = normal_loss_backward(out.normal, *view.normal, view.alpha ? &*view.alpha : nullptr);
        }

        const ParamGradients grads = render_backward(cloud, view.cam, d_color, d_depth, d_normal, cfg.render);
        adam_step(cloud, grads, state, lrs, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

        RefineStats st;
        if (iter % cfg.refine_interval == 0) {
            cloud = densify_and_prune(cloud, grads, cfg, &state, &st);
        }
        if (cloud.count() > static_cast<std::size_t>(cfg.n_max)) {
            throw NumericError("fit_fixed_count: budget invariant violated");
        }
        emit(iter, loss, st);

        history.push_back(loss);
        if (static_cast<int>(history.size()) > 2 * cfg.plateau_window) history.pop_front();
        if (static_cast<int>(history.size()) == 2 * cfg.plateau_window) {
            double recent = 0.0, prior = 0.0;
            for (int i = 0; i < cfg.plateau_window; ++i) {
                prior += history[static_cast<std::size_t>(i)];
                recent += history[static_cast<std::size_t>(i + cfg.plateau_window)];
            }
            const double rel = std::abs(recent - prior) / std::max(std::abs(prior), 1e-12);
            if (rel < cfg.plateau_rel_change) break;
        }
    }

    // Pad to the exact budget with invisible copies of the strongest Gaussians.
    if (cloud.count() < static_cast<std::size_t>(cfg.n_max)) {
        std::vector<std::size_t> by_opacity(cloud.count());
        std::iota(by_opacity.begin(), by_opacity.end(), std::size_t{0});
        std::stable_sort(by_opacity.begin(), by_opacity.end(), [&cloud](std::size_t a, std::size_t b) {
            return cloud[a].opacity_logit > cloud[b].opacity_logit;
        });
        std::size_t src = 0;
        while (cloud.count() < static_cast<std::size_t>(cfg.n_max)) {
            Gaussian pad = cloud[by_opacity[src % by_opacity.size()]];
            pad.opacity_logit = logit(kOpacityClampLo);
            cloud.gaussians.push_back(pad);
            ++src;
        }
    }
    return cloud;
}

} // namespace vxs
