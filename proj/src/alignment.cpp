// SPDX-License-Identifier: Apache-2.0
#include "vxs/alignment.hpp"

#include <algorithm>
#include <cmath>

namespace vxs {
namespace {

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& raw) {
    Eigen::MatrixXd out = raw;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double n = out.row(i).norm();
        if (n < 1e-12) throw InvalidParameter("embedding: zero-norm row");
        out.row(i) /= n;
    }
    return out;
}

// Chains dL/d(unit rows) through row normalization back to the raw rows.
Eigen::MatrixXd normalization_backward(const Eigen::MatrixXd& raw, const Eigen::MatrixXd& unit,
                                       const Eigen::MatrixXd& d_unit) {
    Eigen::MatrixXd d_raw(raw.rows(), raw.cols());
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        const double n = raw.row(i).norm();
        const Eigen::RowVectorXd u = unit.row(i);
        const Eigen::RowVectorXd g = d_unit.row(i);
        d_raw.row(i) = (g - u * u.dot(g)) / n;
    }
    return d_raw;
}

double log_sum_exp(const Eigen::VectorXd& v) {
    const double m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
}

// Symmetric InfoNCE on unit rows; optionally emits dL/d(unit rows).
double info_nce_unit(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double temperature,
                     Eigen::MatrixXd* d_a, Eigen::MatrixXd* d_b) {
    const Eigen::Index n = a.rows();
    if (n == 0) throw InvalidParameter("info_nce_pair: empty batch");
    if (b.rows() != n || b.cols() != a.cols()) throw InvalidParameter("info_nce_pair: batch shape mismatch");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw InvalidParameter("info_nce_pair: temperature must be positive");
    }

    const Eigen::MatrixXd sim = a * b.transpose() / temperature;
    const double inv_n = 1.0 / static_cast<double>(n);

    double fwd = 0.0, bwd = 0.0;
    Eigen::MatrixXd d_sim = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double lse_row = log_sum_exp(sim.row(i).transpose());
        fwd += sim(i, i) - lse_row;
        const double lse_col = log_sum_exp(sim.col(i));
        bwd += sim(i, i) - lse_col;
        if (d_a || d_b) {
            const Eigen::VectorXd soft_row = (sim.row(i).transpose().array() - lse_row).exp();
            const Eigen::VectorXd soft_col = (sim.col(i).array() - lse_col).exp();
            // L = -1/2 (mean_i row-term + mean_i col-term).
            d_sim.row(i) += (-0.5 * inv_n) * (-soft_row.transpose());
            d_sim(i, i) += (-0.5 * inv_n);
            d_sim.col(i) += (-0.5 * inv_n) * (-soft_col);
            d_sim(i, i) += (-0.5 * inv_n);
        }
    }
    const double loss = -0.5 * inv_n * (fwd + bwd);
    if (d_a) *d_a = d_sim * b / temperature;
    if (d_b) *d_b = d_sim.transpose() * a / temperature;
    return loss;
}

double triplet_unit(const Eigen::MatrixXd& s, const Eigen::MatrixXd& p, double margin,
                    Eigen::MatrixXd* d_s, Eigen::MatrixXd* d_p) {
    const Eigen::Index n = s.rows();
    if (n < 2) throw InvalidParameter("triplet_loss: needs at least two items");
    if (p.rows() != n || p.cols() != s.cols()) throw InvalidParameter("triplet_loss: batch shape mismatch");
    if (margin < 0.0 || !std::isfinite(margin)) throw InvalidParameter("triplet_loss: bad margin");

    const double inv_n = 1.0 / static_cast<double>(n);
    if (d_s) d_s->setZero(n, s.cols());
    if (d_p) d_p->setZero(n, p.cols());

    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double own = (s.row(i) - p.row(i)).norm();
        Eigen::Index jstar = -1;
        double nearest = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = (s.row(i) - p.row(j)).norm();
            if (d < nearest) {
                nearest = d;
                jstar = j;
            }
        }
        const double hinge = own - nearest + margin;
        if (hinge <= 0.0) continue;
        loss += hinge * inv_n;
        if (d_s || d_p) {
            if (own > 1e-12) {
                const Eigen::RowVectorXd dir = (s.row(i) - p.row(i)) / own;
                if (d_s) d_s->row(i) += inv_n * dir;
                if (d_p) d_p->row(i) -= inv_n * dir;
            }
            if (nearest > 1e-12) {
                const Eigen::RowVectorXd dir = (s.row(i) - p.row(jstar)) / nearest;
                if (d_s) d_s->row(i) -= inv_n * dir;
                if (d_p) d_p->row(jstar) += inv_n * dir;
            }
        }
    }
    return loss;
}

} // namespace

char modality_tag(Modality m) {
    switch (m) {
    case Modality::Point: return 'P';
    case Modality::Image: return 'I';
    case Modality::Text: return 'T';
    case Modality::Sketch: return 'S';
    }
    return '?';
}

Modality modality_from_tag(char tag) {
    switch (tag) {
    case 'P': return Modality::Point;
    case 'I': return Modality::Image;
    case 'T': return Modality::Text;
    case 'S': return Modality::Sketch;
    default: throw InvalidParameter(std::string("unknown modality tag: ") + tag);
    }
}

EmbeddingBatch EmbeddingBatch::from_raw(Eigen::MatrixXd raw, Modality m) {
    if (!raw.allFinite()) throw InvalidParameter("embedding: non-finite rows");
    EmbeddingBatch batch;
    batch.rows = normalize_rows(raw);
    batch.modality = m;
    return batch;
}

double info_nce_pair(const EmbeddingBatch& a, const EmbeddingBatch& b, double temperature) {
    return info_nce_unit(a.rows, b.rows, temperature, nullptr, nullptr);
}

double stage1_loss(const EmbeddingBatch& points, const EmbeddingBatch& text,
                   const EmbeddingBatch& images, double temperature) {
    return info_nce_pair(points, images, temperature) + info_nce_pair(points, text, temperature);
}

double triplet_loss(const EmbeddingBatch& sketches, const EmbeddingBatch& points, double margin) {
    return triplet_unit(sketches.rows, points.rows, margin, nullptr, nullptr);
}

double stage2_loss(const EmbeddingBatch& sketches, const EmbeddingBatch& points,
                   const EmbeddingBatch& images, const ContrastConfig& cfg) {
    cfg.validate();
    const double contrast = info_nce_pair(points, images, cfg.temperature) +
                            info_nce_pair(sketches, images, cfg.temperature) +
                            info_nce_pair(points, sketches, cfg.temperature);
    return contrast / 3.0 + triplet_loss(sketches, points, cfg.margin);
}

std::vector<double> retrieval_topk(const EmbeddingBatch& queries, const EmbeddingBatch& gallery,
                                   const std::vector<int>& ks) {
    const Eigen::Index n = queries.rows.rows();
    if (n == 0 || gallery.rows.rows() != n) {
        throw InvalidParameter("retrieval_topk: query/gallery sizes must match and be non-empty");
    }
    for (int k : ks) {
        if (k < 1) throw InvalidParameter("retrieval_topk: k must be >= 1");
    }
    std::vector<double> hits(ks.size(), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd sims = gallery.rows * queries.rows.row(i).transpose();
        const double true_sim = sims[i];
        // Rank = number of gallery rows strictly better, plus equal rows at a
        // lower index (ties resolve toward the lower index).
        Eigen::Index rank = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (sims[j] > true_sim || (sims[j] == true_sim && j < i)) ++rank;
        }
        for (std::size_t q = 0; q < ks.size(); ++q) {
            if (rank < ks[q]) hits[q] += 1.0;
        }
    }
    for (double& h : hits) h /= static_cast<double>(n);
    return hits;
}

double info_nce_pair_grad(const Eigen::MatrixXd& a_raw, const Eigen::MatrixXd& b_raw,
                          double temperature, Eigen::MatrixXd* d_a, Eigen::MatrixXd* d_b) {
    const Eigen::MatrixXd a = normalize_rows(a_raw);
    const Eigen::MatrixXd b = normalize_rows(b_raw);
    Eigen::MatrixXd da_unit, db_unit;
    const double loss = info_nce_unit(a, b, temperature, d_a ? &da_unit : nullptr, d_b ? &db_unit : nullptr);
    if (d_a) *d_a = normalization_backward(a_raw, a, da_unit);
    if (d_b) *d_b = normalization_backward(b_raw, b, db_unit);
    return loss;
}

double stage1_loss_grad(const Eigen::MatrixXd& p_raw, const Eigen::MatrixXd& t_raw,
                        const Eigen::MatrixXd& i_raw, double temperature, Eigen::MatrixXd* d_p,
                        Eigen::MatrixXd* d_t, Eigen::MatrixXd* d_i) {
    Eigen::MatrixXd dp1, dp2;
    const double li = info_nce_pair_grad(p_raw, i_raw, temperature, d_p ? &dp1 : nullptr, d_i);
    const double lt = info_nce_pair_grad(p_raw, t_raw, temperature, d_p ? &dp2 : nullptr, d_t);
    if (d_p) *d_p = dp1 + dp2;
    return li + lt;
}

double triplet_loss_grad(const Eigen::MatrixXd& s_raw, const Eigen::MatrixXd& p_raw, double margin,
                         Eigen::MatrixXd* d_s, Eigen::MatrixXd* d_p) {
    const Eigen::MatrixXd s = normalize_rows(s_raw);
    const Eigen::MatrixXd p = normalize_rows(p_raw);
    Eigen::MatrixXd ds_unit, dp_unit;
    const double loss = triplet_unit(s, p, margin, d_s ? &ds_unit : nullptr, d_p ? &dp_unit : nullptr);
    if (d_s) *d_s = normalization_backward(s_raw, s, ds_unit);
    if (d_p) *d_p = normalization_backward(p_raw, p, dp_unit);
    return loss;
}

double stage2_loss_grad(const Eigen::MatrixXd& s_raw, const Eigen::MatrixXd& p_raw,
                        const Eigen::MatrixXd& i_raw, const ContrastConfig& cfg,
                        Eigen::MatrixXd* d_s, Eigen::MatrixXd* d_p, Eigen::MatrixXd* d_i) {
    cfg.validate();
    Eigen::MatrixXd dp_pi, di_pi, ds_si, di_si, dp_ps, ds_ps, ds_t, dp_t;
    const double l_pi = info_nce_pair_grad(p_raw, i_raw, cfg.temperature, d_p ? &dp_pi : nullptr,
                                           d_i ? &di_pi : nullptr);
    const double l_si = info_nce_pair_grad(s_raw, i_raw, cfg.temperature, d_s ? &ds_si : nullptr,
                                           d_i ? &di_si : nullptr);
    const double l_ps = info_nce_pair_grad(p_raw, s_raw, cfg.temperature, d_p ? &dp_ps : nullptr,
                                           d_s ? &ds_ps : nullptr);
    const double l_t = triplet_loss_grad(s_raw, p_raw, cfg.margin, d_s ? &ds_t : nullptr,
                                         d_p ? &dp_t : nullptr);
    if (d_s) *d_s = (ds_si + ds_ps) / 3.0 + ds_t;
    if (d_p) *d_p = (dp_pi + dp_ps) / 3.0 + dp_t;
    if (d_i) *d_i = (di_pi + di_si) / 3.0;
    return (l_pi + l_si + l_ps) / 3.0 + l_t;
}

PointEncoder::PointEncoder(int in_dim, int hidden_dim, int out_dim, std::uint64_t seed) {
    Rng rng(seed);
    auto init = [&rng](Eigen::MatrixXd& m, int rows, int cols) {
        m.resize(rows, cols);
        const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
    };
    init(w1_, hidden_dim, in_dim);
    init(w2_, out_dim, hidden_dim);
    b1_ = Eigen::VectorXd::Zero(hidden_dim);
    b2_ = Eigen::VectorXd::Zero(out_dim);
    zero_grad();
}

Eigen::MatrixXd PointEncoder::forward(const Eigen::MatrixXd& descriptors) const {
    const Eigen::MatrixXd h =
        ((descriptors * w1_.transpose()).rowwise() + b1_.transpose()).array().tanh();
    return (h * w2_.transpose()).rowwise() + b2_.transpose();
}

Eigen::MatrixXd PointEncoder::backward(const Eigen::MatrixXd& descriptors, const Eigen::MatrixXd& d_out) {
    const Eigen::MatrixXd pre = (descriptors * w1_.transpose()).rowwise() + b1_.transpose();
    const Eigen::MatrixXd h = pre.array().tanh();
    gw2_ += d_out.transpose() * h;
    gb2_ += d_out.colwise().sum().transpose();
    const Eigen::MatrixXd d_h = d_out * w2_;
    const Eigen::MatrixXd d_pre = d_h.array() * (1.0 - h.array().square());
    gw1_ += d_pre.transpose() * descriptors;
    gb1_ += d_pre.colwise().sum().transpose();
    return d_pre * w1_;
}

void PointEncoder::zero_grad() {
    gw1_ = Eigen::MatrixXd::Zero(w1_.rows(), w1_.cols());
    gw2_ = Eigen::MatrixXd::Zero(w2_.rows(), w2_.cols());
    gb1_ = Eigen::VectorXd::Zero(b1_.size());
    gb2_ = Eigen::VectorXd::Zero(b2_.size());
}

void PointEncoder::sgd_step(double lr) {
    w1_ -= lr * gw1_;
    w2_ -= lr * gw2_;
    b1_ -= lr * gb1_;
    b2_ -= lr * gb2_;
}

Eigen::VectorXd point_set_descriptor(const std::vector<Eigen::Vector3d>& points) {
    if (points.empty()) throw InvalidParameter("point_set_descriptor: empty point set");
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& p : points) mean += p;
    mean /= static_cast<double>(points.size());

    Eigen::Vector3d var = Eigen::Vector3d::Zero();
    Eigen::Vector3d lo = points[0], hi = points[0];
    double rms = 0.0, max_r = 0.0;
    for (const auto& p : points) {
        const Eigen::Vector3d d = p - mean;
        var += d.cwiseProduct(d);
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
        const double r = d.norm();
        rms += r * r;
        max_r = std::max(max_r, r);
    }
    var /= static_cast<double>(points.size());
    rms = std::sqrt(rms / static_cast<double>(points.size()));

    Eigen::VectorXd hist = Eigen::VectorXd::Zero(8);
    const double denom = max_r > 1e-12 ? max_r : 1.0;
    for (const auto& p : points) {
        const double r = (p - mean).norm() / denom;
        const int bin = std::min(7, static_cast<int>(r * 8.0));
        hist[bin] += 1.0;
    }
    hist /= static_cast<double>(points.size());

    Eigen::VectorXd d(kPointDescriptorDim);
    d.segment<3>(0) = mean;
    d.segment<3>(3) = var.cwiseSqrt();
    d.segment<3>(6) = hi - lo;
    d[9] = rms;
    d[10] = max_r;
    d.segment<8>(11) = hist;
    d[19] = std::log1p(static_cast<double>(points.size()));
    return d;
}

} // namespace vxs
