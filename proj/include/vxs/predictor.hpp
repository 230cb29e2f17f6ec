// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "vxs/common.hpp"
#include "vxs/gaussian.hpp"

namespace vxs {

// Dense n x n x n x channels volume; cell-major x-fastest, channel-last
// (same layout as VoxelGrid features).
struct Volume {
    int n = 0;
    int channels = 0;
    std::vector<double> data;

    Volume() = default;
    Volume(int n_, int c)
        : n(n_), channels(c), data(static_cast<std::size_t>(n_) * n_ * n_ * c, 0.0) {}

    std::size_t cells() const { return static_cast<std::size_t>(n) * n * n; }
    double& at(std::size_t cell, int c) { return data[cell * channels + c]; }
    double at(std::size_t cell, int c) const { return data[cell * channels + c]; }
};

/// Denoiser interface: predicts the noise present in a noisy feature volume.
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    virtual Volume predict(const Volume& noisy, int t, const Eigen::MatrixXd& fused_tokens) = 0;
};

struct ParamEntry {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

class TrainablePredictor : public NoisePredictor {
public:
    virtual std::vector<double>& parameters() = 0;
    virtual std::vector<double>& gradients() = 0;
    virtual void zero_grad() = 0;
    /// Accumulates parameter gradients for the most recent predict() call.
    virtual void backward(const Volume& d_output) = 0;
    virtual const std::vector<ParamEntry>& parameter_layout() const = 0;
};

struct TinyVoxelNetConfig {
    int f1 = 6;            // first-level channels
    int f2 = 12;           // bottleneck channels
    int attn_dim = 8;      // cross-attention query/key width
    int cond_channels = 16; // conditioning token width
    std::uint64_t seed = 1;
};

// Small volumetric noise regressor: two stride-2 encode levels, a bottleneck
// with sinusoidal timestep injection and one cross-attention over the fused
// conditioning tokens, two decode levels with one skip connection. All
// gradients are computed analytically.
class TinyVoxelNet final : public TrainablePredictor {
public:
    explicit TinyVoxelNet(const TinyVoxelNetConfig& cfg = {});

    Volume predict(const Volume& noisy, int t, const Eigen::MatrixXd& fused_tokens) override;
    void backward(const Volume& d_output) override;

    std::vector<double>& parameters() override { return params_; }
    std::vector<double>& gradients() override { return grads_; }
    void zero_grad() override { std::fill(grads_.begin(), grads_.end(), 0.0); }
    const std::vector<ParamEntry>& parameter_layout() const override { return layout_; }

    const TinyVoxelNetConfig& config() const { return cfg_; }

private:
    double* param(const std::string& name);
    double* grad(const std::string& name);

    TinyVoxelNetConfig cfg_;
    std::vector<double> params_, grads_;
    std::vector<ParamEntry> layout_;

    // Cached forward state for backward().
    struct Cache;
    std::unique_ptr<Cache> cache_;

public:
    ~TinyVoxelNet() override;
};

} // namespace vxs
