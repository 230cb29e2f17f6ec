// SPDX-License-Identifier: Apache-2.0
#include "vxs/losses.hpp"

#include <cmath>

#include "vxs/common.hpp"

namespace vxs {
namespace {

constexpr int kLevels = 3;

int conv_out_size(int in) { return (in + 2 - 3) / 2 + 1; } // k=3, stride=2, pad=1

FeatureMap image_as_map(const Image& img) {
    FeatureMap m(img.width, img.height, 3);
    m.data = img.data;
    return m;
}

// out[oc] = tanh(b[oc] + sum_ic sum_k w * in), stride 2, zero padding 1.
FeatureMap conv_forward(const FeatureMap& in, const std::vector<double>& w,
                        const std::vector<double>& b, int out_c) {
    const int ow = conv_out_size(in.width);
    const int oh = conv_out_size(in.height);
    FeatureMap out(ow, oh, out_c);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int oc = 0; oc < out_c; ++oc) {
                double acc = b[oc];
                for (int ic = 0; ic < in.channels; ++ic) {
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = oy * 2 + ky - 1;
                        if (iy < 0 || iy >= in.height) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = ox * 2 + kx - 1;
                            if (ix < 0 || ix >= in.width) continue;
                            acc += w[((static_cast<std::size_t>(oc) * in.channels + ic) * 3 + ky) * 3 + kx] *
                                   in.at(ix, iy, ic);
                        }
                    }
                }
                out.at(ox, oy, oc) = std::tanh(acc);
            }
        }
    }
    return out;
}

// dL/d(in) given dL/d(out) with out = tanh(conv(in)).
FeatureMap conv_backward_input(const FeatureMap& in, const FeatureMap& out,
                               const FeatureMap& d_out, const std::vector<double>& w) {
    FeatureMap d_in(in.width, in.height, in.channels);
    for (int oy = 0; oy < out.height; ++oy) {
        for (int ox = 0; ox < out.width; ++ox) {
            for (int oc = 0; oc < out.channels; ++oc) {
                const double o = out.at(ox, oy, oc);
                const double d_pre = d_out.at(ox, oy, oc) * (1.0 - o * o);
                if (d_pre == 0.0) continue;
                for (int ic = 0; ic < in.channels; ++ic) {
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = oy * 2 + ky - 1;
                        if (iy < 0 || iy >= in.height) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = ox * 2 + kx - 1;
                            if (ix < 0 || ix >= in.width) continue;
                            d_in.at(ix, iy, ic) +=
                                d_pre *
                                w[((static_cast<std::size_t>(oc) * in.channels + ic) * 3 + ky) * 3 + kx];
                        }
                    }
                }
            }
        }
    }
    return d_in;
}

} // namespace

RandomConvPyramid::RandomConvPyramid(std::uint64_t seed, int channels)
    : seed_(seed), channels_(channels) {
    Rng rng(seed);
    int in_c = 3;
    for (int level = 0; level < kLevels; ++level) {
        in_channels_.push_back(in_c);
        std::vector<double> w(static_cast<std::size_t>(channels_) * in_c * 9);
        const double scale = 1.0 / std::sqrt(static_cast<double>(in_c) * 9);
        for (double& x : w) x = rng.normal() * scale;
        std::vector<double> b(channels_);
        for (double& x : b) x = 0.1 * rng.normal();
        weights_.push_back(std::move(w));
        biases_.push_back(std::move(b));
        in_c = channels_;
    }
}

std::vector<FeatureMap> RandomConvPyramid::extract(const Image& img) const {
    std::vector<FeatureMap> maps;
    FeatureMap cur = image_as_map(img);
    for (int level = 0; level < kLevels; ++level) {
        if (cur.width < 1 || cur.height < 1) break;
        cur = conv_forward(cur, weights_[level], biases_[level], channels_);
        maps.push_back(cur);
    }
    return maps;
}

Image RandomConvPyramid::backward(const Image& img, const std::vector<FeatureMap>& upstream) const {
    std::vector<FeatureMap> acts;
    acts.push_back(image_as_map(img));
    for (int level = 0; level < kLevels; ++level) {
        if (acts.back().width < 1 || acts.back().height < 1) break;
        acts.push_back(conv_forward(acts.back(), weights_[level], biases_[level], channels_));
    }
    const int levels = static_cast<int>(acts.size()) - 1;
    if (static_cast<int>(upstream.size()) != levels) {
        throw InvalidParameter("RandomConvPyramid::backward: upstream level count mismatch");
    }
    FeatureMap d_cur(0, 0, 0);
    for (int level = levels - 1; level >= 0; --level) {
        FeatureMap d_out = upstream[level];
        if (d_cur.width > 0) {
            for (std::size_t i = 0; i < d_out.data.size(); ++i) d_out.data[i] += d_cur.data[i];
        }
        d_cur = conv_backward_input(acts[level], acts[level + 1], d_out, weights_[level]);
    }
    Image grad(img.width, img.height);
    grad.data = d_cur.data;
    return grad;
}

double image_loss(const Image& pred, const Image& gt, const FeatureExtractor& fx) {
    require_same_shape(pred, gt, "image_loss");
    double l1 = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) l1 += std::abs(pred.data[i] - gt.data[i]);
    l1 /= static_cast<double>(pred.data.size());

    const std::vector<FeatureMap> fp = fx.extract(pred);
    const std::vector<FeatureMap> fg = fx.extract(gt);
    double sq = 0.0;
    std::size_t count = 0;
    for (std::size_t m = 0; m < fp.size(); ++m) {
        for (std::size_t i = 0; i < fp[m].data.size(); ++i) {
            const double d = fp[m].data[i] - fg[m].data[i];
            sq += d * d;
        }
        count += fp[m].data.size();
    }
    return l1 + (count > 0 ? sq / static_cast<double>(count) : 0.0);
}

Image image_loss_backward(const Image& pred, const Image& gt, const FeatureExtractor& fx) {
    require_same_shape(pred, gt, "image_loss");
    Image grad(pred.width, pred.height);
    const double inv = 1.0 / static_cast<double>(pred.data.size());
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - gt.data[i];
        grad.data[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
    }

    std::vector<FeatureMap> fp = fx.extract(pred);
    const std::vector<FeatureMap> fg = fx.extract(gt);
    if (!fp.empty()) {
        std::size_t count = 0;
        for (const auto& m : fp) count += m.data.size();
        std::vector<FeatureMap> upstream = fp;
        for (std::size_t m = 0; m < fp.size(); ++m) {
            for (std::size_t i = 0; i < fp[m].data.size(); ++i) {
                upstream[m].data[i] = 2.0 * (fp[m].data[i] - fg[m].data[i]) / static_cast<double>(count);
            }
        }
        const Image fgrad = fx.backward(pred, upstream);
        for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += fgrad.data[i];
    }
    return grad;
}

double depth_loss(const ScalarMap& pred, const ScalarMap& gt, const ScalarMap* mask) {
    require_same_shape(pred, gt, "depth_loss");
    if (mask) require_same_shape(pred, *mask, "depth_loss");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        if (mask && (*mask).data[i] <= 0.5) continue;
        sum += std::abs(pred.data[i] - gt.data[i]);
        ++count;
    }
    return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

ScalarMap depth_loss_backward(const ScalarMap& pred, const ScalarMap& gt, const ScalarMap* mask) {
    require_same_shape(pred, gt, "depth_loss");
    if (mask) require_same_shape(pred, *mask, "depth_loss");
    ScalarMap grad(pred.width, pred.height);
    std::size_t count = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        if (mask && (*mask).data[i] <= 0.5) continue;
        ++count;
    }
    if (count == 0) return grad;
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        if (mask && (*mask).data[i] <= 0.5) continue;
        const double d = pred.data[i] - gt.data[i];
        grad.data[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
    }
    return grad;
}

double normal_loss(const Image& pred, const Image& gt, const ScalarMap* mask) {
    require_same_shape(pred, gt, "normal_loss");
    double sum = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < pred.height; ++y) {
        for (int x = 0; x < pred.width; ++x) {
            if (mask && mask->at(x, y) <= 0.5) continue;
            for (int c = 0; c < 3; ++c) sum += std::abs(pred.at(x, y, c) - gt.at(x, y, c));
            count += 3;
        }
    }
    return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

Image normal_loss_backward(const Image& pred, const Image& gt, const ScalarMap* mask) {
    require_same_shape(pred, gt, "normal_loss");
    Image grad(pred.width, pred.height);
    std::size_t count = 0;
    for (int y = 0; y < pred.height; ++y) {
        for (int x = 0; x < pred.width; ++x) {
            if (mask && mask->at(x, y) <= 0.5) continue;
            count += 3;
        }
    }
    if (count == 0) return grad;
    const double inv = 1.0 / static_cast<double>(count);
    for (int y = 0; y < pred.height; ++y) {
        for (int x = 0; x < pred.width; ++x) {
            if (mask && mask->at(x, y) <= 0.5) continue;
            for (int c = 0; c < 3; ++c) {
                const double d = pred.at(x, y, c) - gt.at(x, y, c);
                grad.at(x, y, c) = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
            }
        }
    }
    return grad;
}

double total_refine_loss(double diffusion, double image, double depth, double normal,
                         const RefineWeights& w) {
    w.validate();
    return w.diffusion * diffusion + w.image * image + w.depth * depth + w.normal * normal;
}

double chamfer_distance(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b) {
    if (a.empty() || b.empty()) throw InvalidParameter("chamfer_distance: empty point set");
    auto one_sided = [](const std::vector<Eigen::Vector3d>& from, const std::vector<Eigen::Vector3d>& to) {
        double total = 0.0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
            total += best;
        }
        return total / static_cast<double>(from.size());
    };
    return 0.5 * (one_sided(a, b) + one_sided(b, a));
}

double mse(const Image& a, const Image& b) {
    require_same_shape(a, b, "mse");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.data.size());
}

double psnr(const Image& pred, const Image& gt) {
    const double m = mse(pred, gt);
    if (m <= 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(m);
}

} // namespace vxs
