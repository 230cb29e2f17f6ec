// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "vxs/common.hpp"

namespace vxs {

enum class Modality { Point, Image, Text, Sketch };

char modality_tag(Modality m);
Modality modality_from_tag(char tag);

// A batch of per-item embeddings; rows are L2-normalized on construction.
struct EmbeddingBatch {
    Eigen::MatrixXd rows; // N x D, unit rows
    Modality modality = Modality::Point;

    static EmbeddingBatch from_raw(Eigen::MatrixXd raw, Modality m);
    std::size_t size() const { return static_cast<std::size_t>(rows.rows()); }
    int dim() const { return static_cast<int>(rows.cols()); }
};

struct ContrastConfig {
    double temperature = 0.07;
    double margin = 0.5;

    void validate() const {
        if (!(temperature > 0.0) || !std::isfinite(temperature)) {
            throw InvalidParameter("contrast: temperature must be finite and positive");
        }
        if (margin < 0.0 || !std::isfinite(margin)) {
            throw InvalidParameter("contrast: margin must be finite and >= 0");
        }
    }
};

/// Symmetric InfoNCE between matched batches (row i of a pairs with row i of b).
double info_nce_pair(const EmbeddingBatch& a, const EmbeddingBatch& b, double temperature);

/// Stage-1 objective: point-image plus point-text contrast.
double stage1_loss(const EmbeddingBatch& points, const EmbeddingBatch& text,
                   const EmbeddingBatch& images, double temperature);

/// Hinge on (own sketch-shape distance) - (nearest other shape) + margin.
double triplet_loss(const EmbeddingBatch& sketches, const EmbeddingBatch& points, double margin);

/// Stage-2 objective: mean of the three pairwise contrasts plus the triplet term.
double stage2_loss(const EmbeddingBatch& sketches, const EmbeddingBatch& points,
                   const EmbeddingBatch& images, const ContrastConfig& cfg);

/// Fraction of queries whose true gallery row (same index) ranks in the top k
/// by cosine similarity; similarity ties resolve to the lower gallery index.
std::vector<double> retrieval_topk(const EmbeddingBatch& queries, const EmbeddingBatch& gallery,
                                   const std::vector<int>& ks);

// Gradient-carrying variants. These take raw (unnormalized) embedding rows and
// differentiate through the row normalization; pass nullptr to skip an output.
double info_nce_pair_grad(const Eigen::MatrixXd& a_raw, const Eigen::MatrixXd& b_raw,
                          double temperature, Eigen::MatrixXd* d_a, Eigen::MatrixXd* d_b);
double stage1_loss_grad(const Eigen::MatrixXd& p_raw, const Eigen::MatrixXd& t_raw,
                        const Eigen::MatrixXd& i_raw, double temperature, Eigen::MatrixXd* d_p,
                        Eigen::MatrixXd* d_t, Eigen::MatrixXd* d_i);
double triplet_loss_grad(const Eigen::MatrixXd& s_raw, const Eigen::MatrixXd& p_raw, double margin,
                         Eigen::MatrixXd* d_s, Eigen::MatrixXd* d_p);
double stage2_loss_grad(const Eigen::MatrixXd& s_raw, const Eigen::MatrixXd& p_raw,
                        const Eigen::MatrixXd& i_raw, const ContrastConfig& cfg,
                        Eigen::MatrixXd* d_s, Eigen::MatrixXd* d_p, Eigen::MatrixXd* d_i);

// Tiny trainable embedding provider: descriptor -> hidden tanh -> embedding.
// Stands in for the pretrained point/sketch backbones in the fine-tuning demo.
class PointEncoder {
public:
    PointEncoder(int in_dim, int hidden_dim, int out_dim, std::uint64_t seed);

    /// Raw (unnormalized) embeddings, one row per descriptor row.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& descriptors) const;

    /// Accumulates parameter gradients for dL/d(output); returns dL/d(input).
    Eigen::MatrixXd backward(const Eigen::MatrixXd& descriptors, const Eigen::MatrixXd& d_out);

    void zero_grad();
    void sgd_step(double lr);

    int in_dim() const { return static_cast<int>(w1_.cols()); }
    int out_dim() const { return static_cast<int>(w2_.rows()); }

private:
    Eigen::MatrixXd w1_, w2_, gw1_, gw2_;
    Eigen::VectorXd b1_, b2_, gb1_, gb2_;
};

/// Fixed-length geometric descriptor of a point set (moments, extents and a
/// radial histogram) for PointEncoder.
Eigen::VectorXd point_set_descriptor(const std::vector<Eigen::Vector3d>& points);
constexpr int kPointDescriptorDim = 20;

} // namespace vxs
