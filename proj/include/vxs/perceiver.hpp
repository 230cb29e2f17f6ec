// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include "vxs/common.hpp"

namespace vxs {

constexpr int kReducedTokens = 16;
constexpr int kSketchTokens = 129;

// One cross-attention block: learned queries attend over projected input
// tokens, followed by a residual feed-forward layer.
struct PerceiverWeights {
    Eigen::MatrixXd queries; // kReducedTokens x C
    Eigen::MatrixXd w_key;   // C x C (tokens * w_key)
    Eigen::MatrixXd w_value; // C x C
    Eigen::MatrixXd ff1;     // C x H
    Eigen::VectorXd fb1;     // H
    Eigen::MatrixXd ff2;     // H x C
    Eigen::VectorXd fb2;     // C

    static PerceiverWeights random(int channels, int hidden, std::uint64_t seed);
    /// Identity key/value projections and a zero feed-forward; used by tests.
    static PerceiverWeights passthrough(int channels);
};

/// Distills L x C tokens into kReducedTokens x C. Optionally emits the
/// attention matrix (kReducedTokens x L, rows summing to 1).
Eigen::MatrixXd perceiver_reduce(const Eigen::MatrixXd& tokens, const PerceiverWeights& w,
                                 Eigen::MatrixXd* attention = nullptr);

/// Row-wise concatenation, sketch rows first, text row last.
Eigen::MatrixXd fuse_condition(const Eigen::MatrixXd& reduced_sketch, const Eigen::MatrixXd& text);

// Conditioning inputs for one object: raw sketch tokens, their reduction, the
// pooled text embedding, and the fused token stack fed to the denoiser.
struct ConditionBundle {
    Eigen::MatrixXd sketch_tokens;  // L x C
    Eigen::MatrixXd reduced_sketch; // kReducedTokens x C
    Eigen::MatrixXd text_embedding; // 1 x C
    Eigen::MatrixXd fused;          // (kReducedTokens + 1) x C

    static ConditionBundle build(const Eigen::MatrixXd& sketch_tokens,
                                 const Eigen::MatrixXd& text_embedding, const PerceiverWeights& w);
};

} // namespace vxs
