// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "vxs/camera.hpp"
#include "vxs/gaussian.hpp"
#include "vxs/losses.hpp"
#include "vxs/rasterizer.hpp"

namespace vxs {

struct EDCConfig {
    int n_max = 512;
    int max_iters = 3000;
    double sample_fraction = 0.8;    // initialization keeps sample_fraction * n_max
    double grad_threshold = 2e-4;    // tau_p, NDC-unit positional gradient magnitude
    double scale_threshold = 0.0;    // tau_S in scene units; <= 0 resolves to 1% of extent
    double opacity_prune = 0.005;    // epsilon
    double too_large_frac = 0.10;    // prune when max scale exceeds this fraction of extent
    int refine_interval = 100;

    double lr_position = 2e-4; // scaled by scene extent inside fit
    double lr_rotation = 1e-3;
    double lr_log_scale = 5e-3;
    double lr_opacity = 5e-2;
    double lr_color = 1e-2;

    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-15;

    double plateau_rel_change = 1e-5;
    int plateau_window = 100;

    bool use_depth_loss = false;
    bool use_normal_loss = false;
    double scene_extent = 0.0; // <= 0 resolves to the init cloud's bbox diagonal

    RenderConfig render;

    void validate() const {
        if (n_max < 1 || max_iters < 0) throw InvalidParameter("edc: bad budget or iteration count");
        if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) {
            throw InvalidParameter("edc: sample_fraction must be in (0, 1]");
        }
        if (grad_threshold <= 0.0 || opacity_prune <= 0.0 || too_large_frac <= 0.0) {
            throw InvalidParameter("edc: thresholds must be positive");
        }
        if (refine_interval < 1) throw InvalidParameter("edc: refine_interval must be >= 1");
    }
};

// Adam first/second moments over the 14 raw parameters of every Gaussian:
// [position(3), rotation(4), log_scale(3), opacity_logit(1), color(3)].
struct OptimizerState {
    std::vector<Eigen::Matrix<double, 14, 1>> m;
    std::vector<Eigen::Matrix<double, 14, 1>> v;
    long step = 0;

    void resize(std::size_t n) {
        m.assign(n, Eigen::Matrix<double, 14, 1>::Zero());
        v.assign(n, Eigen::Matrix<double, 14, 1>::Zero());
    }
    std::size_t size() const { return m.size(); }
};

struct GroupLearningRates {
    double position = 2e-4;
    double rotation = 1e-3;
    double log_scale = 5e-3;
    double opacity = 5e-2;
    double color = 1e-2;
};

struct RefineStats {
    int delta_n = 0;
    int pruned = 0;
    int split = 0;
    int cloned = 0;
};

struct TrainingView {
    Camera cam;
    Image color;
    std::optional<ScalarMap> depth;
    std::optional<Image> normal;
    std::optional<ScalarMap> alpha; // coverage mask for depth/normal losses
};

/// Greedy farthest-point selection on Gaussian centers, seeded at the
/// highest-opacity Gaussian; output preserves the original relative order.
GaussianCloud farthest_gaussian_sample(const GaussianCloud& cloud, std::size_t k);

/// Bias-corrected Adam over all raw parameters; renormalizes quaternions.
void adam_step(GaussianCloud& cloud, const ParamGradients& grads, OptimizerState& state,
               const GroupLearningRates& lrs, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-15);

/// One refinement pass: prune, then constrained densification up to n_max.
/// `state`, when non-null, is kept aligned with the surviving/added Gaussians.
GaussianCloud densify_and_prune(const GaussianCloud& cloud, const ParamGradients& grads,
                                const EDCConfig& cfg, OptimizerState* state,
                                RefineStats* stats = nullptr);

/// Full fixed-budget conversion loop. `log` (optional) receives one CSV row
/// per iteration: iter,loss,count,delta_n,pruned,split,cloned.
GaussianCloud fit_fixed_count(const GaussianCloud& pretrained, const std::vector<TrainingView>& views,
                              const EDCConfig& cfg, const FeatureExtractor& fx,
                              std::ostream* log = nullptr);

} // namespace vxs
