// SPDX-License-Identifier: Apache-2.0
#include "vxs/diffusion.hpp"

#include <cmath>
#include <ostream>

namespace vxs {

double NoiseSchedule::alpha_bar_at(int t) const {
    if (t < 1 || t > steps()) throw InvalidParameter("schedule: timestep out of range");
    return alpha_bar[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule schedule_from_betas(const std::vector<double>& betas) {
    NoiseSchedule s;
    s.beta = betas;
    s.alpha_bar.resize(betas.size());
    double prod = 1.0;
    for (std::size_t i = 0; i < betas.size(); ++i) {
        prod *= 1.0 - betas[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

NoiseSchedule make_schedule(const DiffusionConfig& cfg) {
    cfg.validate();
    std::vector<double> betas(static_cast<std::size_t>(cfg.steps));
    for (int t = 0; t < cfg.steps; ++t) {
        betas[static_cast<std::size_t>(t)] =
            cfg.beta_start + (cfg.beta_end - cfg.beta_start) * t / static_cast<double>(cfg.steps - 1);
    }
    NoiseSchedule s = schedule_from_betas(betas);
    for (std::size_t i = 1; i < s.alpha_bar.size(); ++i) {
        if (!(s.alpha_bar[i] < s.alpha_bar[i - 1])) {
            throw NumericError("make_schedule: alpha_bar not strictly decreasing");
        }
    }
    return s;
}

std::vector<double> q_sample(const std::vector<double>& x0, int t, const std::vector<double>& eps,
                             const NoiseSchedule& schedule) {
    if (x0.size() != eps.size()) throw InvalidParameter("q_sample: shape mismatch");
    const double ab = schedule.alpha_bar_at(t);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    std::vector<double> xt(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) xt[i] = a * x0[i] + b * eps[i];
    return xt;
}

std::vector<double> predict_x0(const std::vector<double>& xt, int t, const std::vector<double>& eps_hat,
                               const NoiseSchedule& schedule) {
    if (xt.size() != eps_hat.size()) throw InvalidParameter("predict_x0: shape mismatch");
    const double ab = schedule.alpha_bar_at(t);
    if (ab < 1e-8) throw NumericError("predict_x0: alpha_bar too small for stable inversion");
    const double inv_a = 1.0 / std::sqrt(ab), b = std::sqrt(1.0 - ab);
    std::vector<double> x0(xt.size());
    for (std::size_t i = 0; i < xt.size(); ++i) x0[i] = (xt[i] - b * eps_hat[i]) * inv_a;
    return x0;
}

double diffusion_loss(const std::vector<double>& eps, const std::vector<double>& eps_hat) {
    if (eps.size() != eps_hat.size() || eps.empty()) throw InvalidParameter("diffusion_loss: shape mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double d = eps[i] - eps_hat[i];
        sum += d * d;
    }
    return sum / static_cast<double>(eps.size());
}

DiffusionTrainer::DiffusionTrainer(TrainablePredictor& predictor, const DiffusionConfig& cfg,
                                   const FeatureExtractor& fx)
    : predictor_(predictor), cfg_(cfg), fx_(fx), schedule_(make_schedule(cfg)), rng_(cfg.seed) {
    ema_.decay = cfg.ema_decay;
    ema_.init(predictor_.parameters());
    adam_m_.assign(predictor_.parameters().size(), 0.0);
    adam_v_.assign(predictor_.parameters().size(), 0.0);
}

StepLosses DiffusionTrainer::train_step(const std::vector<TrainItem>& batch, int iter) {
    if (batch.empty()) throw InvalidParameter("train_step: empty batch");
    StepLosses losses;
    losses.refined = static_cast<double>(iter) >= cfg_.warmup_fraction * cfg_.max_iters;

    predictor_.zero_grad();
    const double inv_batch = 1.0 / static_cast<double>(batch.size());

    for (const TrainItem& item : batch) {
        const std::vector<double>& x0 = item.grid.features;
        const int t = static_cast<int>(rng_.uniform_int(1, schedule_.steps()));
        std::vector<double> eps(x0.size());
        for (double& e : eps) e = rng_.normal();
        const std::vector<double> xt = q_sample(x0, t, eps, schedule_);

        Volume noisy(item.grid.n, kFeatureChannels);
        noisy.data = xt;
        const Volume eps_hat = predictor_.predict(noisy, t, item.condition.fused);

        losses.diffusion += diffusion_loss(eps, eps_hat.data) * inv_batch;

        // dL/d eps_hat, starting with the weighted diffusion term.
        Volume d_eps(item.grid.n, kFeatureChannels);
        const double diff_scale =
            cfg_.weights.diffusion * 2.0 / static_cast<double>(eps.size()) * inv_batch;
        for (std::size_t i = 0; i < eps.size(); ++i) {
            d_eps.data[i] = diff_scale * (eps_hat.data[i] - eps[i]);
        }

        if (losses.refined && !item.views.empty()) {
            VoxelGrid est = item.grid;
            est.assignment.clear();
            est.features = predict_x0(xt, t, eps_hat.data, schedule_);
            const GaussianCloud cloud = unstructure(est);

            const TrainingView& view = item.views[static_cast<std::size_t>(iter) % item.views.size()];
            const RenderOutput out = render(cloud, view.cam, cfg_.render);

            const ScalarMap* mask = view.alpha ? &*view.alpha : nullptr;
            const double l_img = image_loss(out.color, view.color, fx_);
            const double l_depth = view.depth ? depth_loss(out.depth, *view.depth, mask) : 0.0;
            const double l_normal = view.normal ? normal_loss(out.normal, *view.normal, mask) : 0.0;
            losses.image += l_img * inv_batch;
            losses.depth += l_depth * inv_batch;
            losses.normal += l_normal * inv_batch;

            Image d_color = image_loss_backward(out.color, view.color, fx_);
            for (double& v : d_color.data) v *= cfg_.weights.image * inv_batch;
            ScalarMap d_depth_map(view.cam.width, view.cam.height);
            if (view.depth) {
                d_depth_map = depth_loss_backward(out.depth, *view.depth, mask);
                for (double& v : d_depth_map.data) v *= cfg_.weights.depth * inv_batch;
            }
            Image d_normal_map(view.cam.width, view.cam.height);
            if (view.normal) {
                d_normal_map = normal_loss_backward(out.normal, *view.normal, mask);
                for (double& v : d_normal_map.data) v *= cfg_.weights.normal * inv_batch;
            }

            const ParamGradients cloud_grads =
                render_backward(cloud, view.cam, d_color, d_depth_map, d_normal_map, cfg_.render);
            const std::vector<double> d_features = unstructure_backward(est, cloud_grads);

            // x0_hat = (xt - sqrt(1 - ab) eps_hat) / sqrt(ab).
            const double ab = schedule_.alpha_bar_at(t);
            const double chain = -std::sqrt(1.0 - ab) / std::sqrt(ab);
            for (std::size_t i = 0; i < d_features.size(); ++i) {
                d_eps.data[i] += chain * d_features[i];
            }
        }
        predictor_.backward(d_eps);
    }

    losses.total = total_refine_loss(losses.diffusion, losses.image, losses.depth, losses.normal,
                                     cfg_.weights);
    if (!std::isfinite(losses.total)) {
        throw NumericError("train_step: non-finite loss at iteration " + std::to_string(iter));
    }

    // Bias-corrected Adam over the flat predictor parameters.
    std::vector<double>& params = predictor_.parameters();
    std::vector<double>& grads = predictor_.gradients();
    adam_step_ += 1;
    const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(adam_step_));
    const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(adam_step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        adam_m_[i] = 0.9 * adam_m_[i] + 0.1 * grads[i];
        adam_v_[i] = 0.999 * adam_v_[i] + 0.001 * grads[i] * grads[i];
        params[i] -= cfg_.lr * (adam_m_[i] / bc1) / (std::sqrt(adam_v_[i] / bc2) + 1e-12);
    }
    ema_.update(params);
    return losses;
}

void DiffusionTrainer::log_row(std::ostream& out, int iter, const StepLosses& losses) {
    out << iter << ',' << losses.diffusion << ',' << losses.image << ',' << losses.depth << ','
        << losses.normal << ',' << losses.total << '\n';
}

VoxelGrid sample(NoisePredictor& predictor, const Eigen::MatrixXd& fused_tokens,
                 const DiffusionConfig& cfg, int grid_n, const Eigen::Vector3d& bounds_lo,
                 const Eigen::Vector3d& bounds_hi, std::uint64_t seed) {
    const NoiseSchedule schedule = make_schedule(cfg);
    Rng rng(seed);

    const std::size_t size = static_cast<std::size_t>(grid_n) * grid_n * grid_n * kFeatureChannels;
    Volume x(grid_n, kFeatureChannels);
    for (double& v : x.data) v = rng.normal();

    for (int t = schedule.steps(); t >= 1; --t) {
        const Volume eps_hat = predictor.predict(x, t, fused_tokens);
        const double beta = schedule.beta[static_cast<std::size_t>(t - 1)];
        const double ab = schedule.alpha_bar_at(t);
        const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
        const double noise_coeff = beta / std::sqrt(1.0 - ab);
        for (std::size_t i = 0; i < size; ++i) {
            x.data[i] = inv_sqrt_alpha * (x.data[i] - noise_coeff * eps_hat.data[i]);
        }
        if (t > 1) {
            const double ab_prev = schedule.alpha_bar_at(t - 1);
            const double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * beta);
            for (std::size_t i = 0; i < size; ++i) x.data[i] += sigma * rng.normal();
        }
    }

    for (double v : x.data) {
        if (!std::isfinite(v)) throw NumericError("sample: non-finite output grid");
    }
    VoxelGrid grid;
    grid.n = grid_n;
    grid.bounds_lo = bounds_lo;
    grid.bounds_hi = bounds_hi;
    grid.features = std::move(x.data);
    return grid;
}

} // namespace vxs
