// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "vxs/image.hpp"

namespace vxs {

struct RefineWeights {
    double diffusion = 1.0;
    double image = 1.0;
    double depth = 0.5;
    double normal = 0.5;

    void validate() const {
        for (double w : {diffusion, image, depth, normal}) {
            if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidParameter("refine weights must be finite and >= 0");
        }
    }
};

// Generic W x H x C feature plane, row-major, channel-interleaved.
struct FeatureMap {
    int width = 0, height = 0, channels = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int w, int h, int c)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0.0) {}

    double& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

// Maps an image to a list of feature maps. Implementations must be
// deterministic for fixed weights.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::vector<FeatureMap> extract(const Image& img) const = 0;
    /// dL/d(input image) given dL/d(each feature map).
    virtual Image backward(const Image& img, const std::vector<FeatureMap>& upstream) const = 0;
};

/// Extractor with no feature maps; image_loss degenerates to pure pixel L1.
class NullFeatureExtractor final : public FeatureExtractor {
public:
    std::vector<FeatureMap> extract(const Image&) const override { return {}; }
    Image backward(const Image& img, const std::vector<FeatureMap>&) const override {
        return Image(img.width, img.height);
    }
};

// Three stride-2 conv3x3 + tanh levels with fixed random weights drawn from a
// persisted seed. Stands in for a pretrained perceptual network.
class RandomConvPyramid final : public FeatureExtractor {
public:
    explicit RandomConvPyramid(std::uint64_t seed = 0x5eedf00dULL, int channels = 8);

    std::vector<FeatureMap> extract(const Image& img) const override;
    Image backward(const Image& img, const std::vector<FeatureMap>& upstream) const override;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    int channels_;
    // weights_[level]: out_c x in_c x 3 x 3, flattened; biases per level.
    std::vector<std::vector<double>> weights_;
    std::vector<std::vector<double>> biases_;
    std::vector<int> in_channels_;
};

/// Pixel L1 plus feature-space MSE (mean over all feature elements).
double image_loss(const Image& pred, const Image& gt, const FeatureExtractor& fx);
/// dL/d(pred) for image_loss.
Image image_loss_backward(const Image& pred, const Image& gt, const FeatureExtractor& fx);

/// Mean absolute depth error over pixels where mask > 0.5; 0 if mask empty.
/// A null mask means all pixels count.
double depth_loss(const ScalarMap& pred, const ScalarMap& gt, const ScalarMap* mask);
ScalarMap depth_loss_backward(const ScalarMap& pred, const ScalarMap& gt, const ScalarMap* mask);

double normal_loss(const Image& pred, const Image& gt, const ScalarMap* mask);
Image normal_loss_backward(const Image& pred, const Image& gt, const ScalarMap* mask);

double total_refine_loss(double diffusion, double image, double depth, double normal,
                         const RefineWeights& w);

/// Symmetric mean squared nearest-neighbor distance, halved.
double chamfer_distance(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b);

double mse(const Image& a, const Image& b);
double psnr(const Image& pred, const Image& gt);

} // namespace vxs
