// SPDX-License-Identifier: Apache-2.0
#include "vxs/perceiver.hpp"

#include <cmath>

namespace vxs {

PerceiverWeights PerceiverWeights::random(int channels, int hidden, std::uint64_t seed) {
    Rng rng(seed);
    auto fill = [&rng](Eigen::MatrixXd& m, int rows, int cols, double scale) {
        m.resize(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
    };
    PerceiverWeights w;
    fill(w.queries, kReducedTokens, channels, 1.0 / std::sqrt(static_cast<double>(channels)));
    fill(w.w_key, channels, channels, 1.0 / std::sqrt(static_cast<double>(channels)));
    fill(w.w_value, channels, channels, 1.0 / std::sqrt(static_cast<double>(channels)));
    fill(w.ff1, channels, hidden, 1.0 / std::sqrt(static_cast<double>(channels)));
    fill(w.ff2, hidden, channels, 1.0 / std::sqrt(static_cast<double>(hidden)));
    w.fb1 = Eigen::VectorXd::Zero(hidden);
    w.fb2 = Eigen::VectorXd::Zero(channels);
    return w;
}

PerceiverWeights PerceiverWeights::passthrough(int channels) {
    PerceiverWeights w;
    w.queries = Eigen::MatrixXd::Zero(kReducedTokens, channels);
    w.w_key = Eigen::MatrixXd::Identity(channels, channels);
    w.w_value = Eigen::MatrixXd::Identity(channels, channels);
    w.ff1 = Eigen::MatrixXd::Zero(channels, 1);
    w.fb1 = Eigen::VectorXd::Zero(1);
    w.ff2 = Eigen::MatrixXd::Zero(1, channels);
    w.fb2 = Eigen::VectorXd::Zero(channels);
    return w;
}

Eigen::MatrixXd perceiver_reduce(const Eigen::MatrixXd& tokens, const PerceiverWeights& w,
                                 Eigen::MatrixXd* attention) {
    if (tokens.rows() < 1) throw InvalidParameter("perceiver_reduce: no tokens");
    if (tokens.cols() != w.queries.cols()) {
        throw InvalidParameter("perceiver_reduce: token channel mismatch");
    }
    const Eigen::MatrixXd keys = tokens * w.w_key;     // L x C
    const Eigen::MatrixXd values = tokens * w.w_value; // L x C
    const double scale = 1.0 / std::sqrt(static_cast<double>(tokens.cols()));

    Eigen::MatrixXd scores = w.queries * keys.transpose() * scale; // Q x L
    Eigen::MatrixXd attn(scores.rows(), scores.cols());
    for (Eigen::Index q = 0; q < scores.rows(); ++q) {
        const double m = scores.row(q).maxCoeff();
        Eigen::RowVectorXd e = (scores.row(q).array() - m).exp();
        attn.row(q) = e / e.sum();
    }
    if (attention) *attention = attn;

    const Eigen::MatrixXd h = attn * values; // Q x C
    const Eigen::MatrixXd hidden = ((h * w.ff1).rowwise() + w.fb1.transpose()).array().tanh();
    return h + ((hidden * w.ff2).rowwise() + w.fb2.transpose());
}

Eigen::MatrixXd fuse_condition(const Eigen::MatrixXd& reduced_sketch, const Eigen::MatrixXd& text) {
    if (text.rows() != 1) throw InvalidParameter("fuse_condition: text must be a single row");
    if (text.cols() != reduced_sketch.cols()) {
        throw InvalidParameter("fuse_condition: channel mismatch");
    }
    Eigen::MatrixXd fused(reduced_sketch.rows() + 1, reduced_sketch.cols());
    fused.topRows(reduced_sketch.rows()) = reduced_sketch;
    fused.bottomRows(1) = text;
    return fused;
}

ConditionBundle ConditionBundle::build(const Eigen::MatrixXd& sketch_tokens,
                                       const Eigen::MatrixXd& text_embedding,
                                       const PerceiverWeights& w) {
    ConditionBundle bundle;
    bundle.sketch_tokens = sketch_tokens;
    bundle.reduced_sketch = perceiver_reduce(sketch_tokens, w);
    bundle.text_embedding = text_embedding;
    bundle.fused = fuse_condition(bundle.reduced_sketch, text_embedding);
    if (!bundle.fused.allFinite()) throw NumericError("condition bundle: non-finite fused tokens");
    return bundle;
}

} // namespace vxs
