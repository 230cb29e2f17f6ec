// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <vector>

#include "vxs/edc.hpp"
#include "vxs/losses.hpp"
#include "vxs/perceiver.hpp"
#include "vxs/predictor.hpp"
#include "vxs/voxel_grid.hpp"

namespace vxs {

struct DiffusionConfig {
    int steps = 100;           // T
    double beta_start = 1e-4;
    double beta_end = 0.02;
    RefineWeights weights;
    double warmup_fraction = 0.4; // refinement losses start at warmup_fraction * max_iters
    double ema_decay = 0.999;
    std::uint64_t seed = 0;
    int max_iters = 500;
    double lr = 1e-4;
    RenderConfig render;

    void validate() const {
        if (steps < 2) throw InvalidParameter("diffusion: needs T >= 2");
        if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
            throw InvalidParameter("diffusion: betas must be increasing in (0, 1)");
        }
        if (warmup_fraction < 0.0 || warmup_fraction > 1.0) {
            throw InvalidParameter("diffusion: warmup_fraction must be in [0, 1]");
        }
        if (ema_decay < 0.0 || ema_decay > 1.0) throw InvalidParameter("diffusion: bad EMA decay");
        weights.validate();
    }
};

struct NoiseSchedule {
    std::vector<double> beta;      // T entries, index t-1
    std::vector<double> alpha_bar; // cumulative products of (1 - beta)

    int steps() const { return static_cast<int>(beta.size()); }
    double alpha_bar_at(int t) const;
};

/// Cumulative products for an explicit beta sequence (no validation).
NoiseSchedule schedule_from_betas(const std::vector<double>& betas);

/// Linear beta schedule from the config; alpha_bar is strictly decreasing.
NoiseSchedule make_schedule(const DiffusionConfig& cfg);

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
std::vector<double> q_sample(const std::vector<double>& x0, int t, const std::vector<double>& eps,
                             const NoiseSchedule& schedule);

/// One-step clean estimate from predicted noise (Eq. of the reparameterized x0).
std::vector<double> predict_x0(const std::vector<double>& xt, int t, const std::vector<double>& eps_hat,
                               const NoiseSchedule& schedule);

/// Mean squared error between true and predicted noise.
double diffusion_loss(const std::vector<double>& eps, const std::vector<double>& eps_hat);

// Exponential moving average of a parameter vector.
// decay 0 tracks the parameters exactly; decay 1 never moves.
struct Ema {
    std::vector<double> shadow;
    double decay = 0.999;

    void init(const std::vector<double>& params) { shadow = params; }
    void update(const std::vector<double>& params) {
        for (std::size_t i = 0; i < shadow.size(); ++i) {
            shadow[i] = decay * shadow[i] + (1.0 - decay) * params[i];
        }
    }
};

struct TrainItem {
    VoxelGrid grid;
    ConditionBundle condition;
    std::vector<TrainingView> views;
};

struct StepLosses {
    double diffusion = 0.0;
    double image = 0.0;
    double depth = 0.0;
    double normal = 0.0;
    double total = 0.0;
    bool refined = false;
};

// Orchestrates noise-prediction training with the optional rendering-loss
// refinement phase after warm-up. Owns Adam state and EMA for the predictor.
class DiffusionTrainer {
public:
    DiffusionTrainer(TrainablePredictor& predictor, const DiffusionConfig& cfg,
                     const FeatureExtractor& fx);

    StepLosses train_step(const std::vector<TrainItem>& batch, int iter);

    const NoiseSchedule& schedule() const { return schedule_; }
    const Ema& ema() const { return ema_; }
    Rng& rng() { return rng_; }

    /// iter,diffusion,image,depth,normal,total CSV row.
    static void log_row(std::ostream& out, int iter, const StepLosses& losses);

private:
    TrainablePredictor& predictor_;
    DiffusionConfig cfg_;
    const FeatureExtractor& fx_;
    NoiseSchedule schedule_;
    Ema ema_;
    Rng rng_;
    std::vector<double> adam_m_, adam_v_;
    long adam_step_ = 0;
};

/// Ancestral DDPM sampling from pure noise; deterministic for a fixed seed.
VoxelGrid sample(NoisePredictor& predictor, const Eigen::MatrixXd& fused_tokens,
                 const DiffusionConfig& cfg, int grid_n, const Eigen::Vector3d& bounds_lo,
                 const Eigen::Vector3d& bounds_hi, std::uint64_t seed);

} // namespace vxs
