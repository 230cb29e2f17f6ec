// SPDX-License-Identifier: Apache-2.0
#include "vxs/predictor.hpp"

#include <cmath>
#include <map>

namespace vxs {
namespace {

inline std::size_t cell_index(int x, int y, int z, int n) {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(n) * (static_cast<std::size_t>(y) +
                                                                        static_cast<std::size_t>(n) * z);
}

// 3x3x3 convolution, stride 1, zero padding 1. Weight layout:
// ((oc * in_c + ic) * 27 + (kz * 9 + ky * 3 + kx)).
Volume conv3(const Volume& in, const double* w, const double* b, int out_c) {
    Volume out(in.n, out_c);
    const int n = in.n;
    for (int z = 0; z < n; ++z) {
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                const std::size_t cell = cell_index(x, y, z, n);
                for (int oc = 0; oc < out_c; ++oc) {
                    double acc = b[oc];
                    for (int kz = 0; kz < 3; ++kz) {
                        const int iz = z + kz - 1;
                        if (iz < 0 || iz >= n) continue;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int iy = y + ky - 1;
                            if (iy < 0 || iy >= n) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int ix = x + kx - 1;
                                if (ix < 0 || ix >= n) continue;
                                const std::size_t src = cell_index(ix, iy, iz, n);
                                const int tap = kz * 9 + ky * 3 + kx;
                                for (int ic = 0; ic < in.channels; ++ic) {
                                    acc += w[(static_cast<std::size_t>(oc) * in.channels + ic) * 27 + tap] *
                                           in.at(src, ic);
                                }
                            }
                        }
                    }
                    out.at(cell, oc) = acc;
                }
            }
        }
    }
    return out;
}

void conv3_backward(const Volume& in, const Volume& d_out, const double* w, double* d_w, double* d_b,
                    Volume& d_in) {
    const int n = in.n;
    const int out_c = d_out.channels;
    for (int z = 0; z < n; ++z) {
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                const std::size_t cell = cell_index(x, y, z, n);
                for (int oc = 0; oc < out_c; ++oc) {
                    const double g = d_out.at(cell, oc);
                    if (g == 0.0) continue;
                    d_b[oc] += g;
                    for (int kz = 0; kz < 3; ++kz) {
                        const int iz = z + kz - 1;
                        if (iz < 0 || iz >= n) continue;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int iy = y + ky - 1;
                            if (iy < 0 || iy >= n) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int ix = x + kx - 1;
                                if (ix < 0 || ix >= n) continue;
                                const std::size_t src = cell_index(ix, iy, iz, n);
                                const int tap = kz * 9 + ky * 3 + kx;
                                for (int ic = 0; ic < in.channels; ++ic) {
                                    const std::size_t wi =
                                        (static_cast<std::size_t>(oc) * in.channels + ic) * 27 + tap;
                                    d_w[wi] += g * in.at(src, ic);
                                    d_in.at(src, ic) += g * w[wi];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

Volume silu_forward(const Volume& in) {
    Volume out = in;
    for (double& v : out.data) v = silu(v);
    return out;
}

Volume silu_backward(const Volume& pre, const Volume& d_act) {
    Volume d_pre = pre;
    for (std::size_t i = 0; i < pre.data.size(); ++i) {
        d_pre.data[i] = d_act.data[i] * silu_grad(pre.data[i]);
    }
    return d_pre;
}

Volume avg_pool2(const Volume& in) {
    const int half = in.n / 2;
    Volume out(half, in.channels);
    for (int z = 0; z < half; ++z) {
        for (int y = 0; y < half; ++y) {
            for (int x = 0; x < half; ++x) {
                const std::size_t dst = cell_index(x, y, z, half);
                for (int c = 0; c < in.channels; ++c) {
                    double acc = 0.0;
                    for (int dz = 0; dz < 2; ++dz) {
                        for (int dy = 0; dy < 2; ++dy) {
                            for (int dx = 0; dx < 2; ++dx) {
                                acc += in.at(cell_index(2 * x + dx, 2 * y + dy, 2 * z + dz, in.n), c);
                            }
                        }
                    }
                    out.at(dst, c) = acc / 8.0;
                }
            }
        }
    }
    return out;
}

Volume avg_pool2_backward(const Volume& d_out, int in_n) {
    Volume d_in(in_n, d_out.channels);
    const int half = d_out.n;
    for (int z = 0; z < half; ++z) {
        for (int y = 0; y < half; ++y) {
            for (int x = 0; x < half; ++x) {
                const std::size_t src = cell_index(x, y, z, half);
                for (int c = 0; c < d_out.channels; ++c) {
                    const double g = d_out.at(src, c) / 8.0;
                    for (int dz = 0; dz < 2; ++dz) {
                        for (int dy = 0; dy < 2; ++dy) {
                            for (int dx = 0; dx < 2; ++dx) {
                                d_in.at(cell_index(2 * x + dx, 2 * y + dy, 2 * z + dz, in_n), c) += g;
                            }
                        }
                    }
                }
            }
        }
    }
    return d_in;
}

Volume upsample2(const Volume& in) {
    const int big = in.n * 2;
    Volume out(big, in.channels);
    for (int z = 0; z < big; ++z) {
        for (int y = 0; y < big; ++y) {
            for (int x = 0; x < big; ++x) {
                const std::size_t dst = cell_index(x, y, z, big);
                const std::size_t src = cell_index(x / 2, y / 2, z / 2, in.n);
                for (int c = 0; c < in.channels; ++c) out.at(dst, c) = in.at(src, c);
            }
        }
    }
    return out;
}

Volume upsample2_backward(const Volume& d_out, int in_n) {
    Volume d_in(in_n, d_out.channels);
    const int big = d_out.n;
    for (int z = 0; z < big; ++z) {
        for (int y = 0; y < big; ++y) {
            for (int x = 0; x < big; ++x) {
                const std::size_t src = cell_index(x / 2, y / 2, z / 2, in_n);
                const std::size_t dst = cell_index(x, y, z, big);
                for (int c = 0; c < d_out.channels; ++c) d_in.at(src, c) += d_out.at(dst, c);
            }
        }
    }
    return d_in;
}

Eigen::VectorXd time_embedding(int t, int dim) {
    Eigen::VectorXd e(dim);
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        const double omega = std::exp(-std::log(10000.0) * k / std::max(half - 1, 1));
        e[2 * k] = std::sin(t * omega);
        e[2 * k + 1] = std::cos(t * omega);
    }
    if (dim % 2 == 1) e[dim - 1] = 0.0;
    return e;
}

} // namespace

struct TinyVoxelNet::Cache {
    Volume input;
    Volume pre1, act1, p1;
    Volume pre2, act2, p2;
    Volume bottleneck_in;  // p2 + time projection
    Volume bottleneck_out; // after attention residual
    Eigen::MatrixXd tokens, keys, values;   // L x {C, A, F2}
    Eigen::MatrixXd attn;                   // cells x L
    Eigen::MatrixXd queries;                // cells x A
    Eigen::VectorXd temb;
    Volume up1, pre3, act3, u1;
    Volume up2;
};

TinyVoxelNet::TinyVoxelNet(const TinyVoxelNetConfig& cfg) : cfg_(cfg) {
    auto add = [this](const std::string& name, std::vector<std::uint64_t> shape) {
        ParamEntry e;
        e.name = name;
        e.shape = std::move(shape);
        e.size = 1;
        for (auto s : e.shape) e.size *= s;
        e.offset = params_.size();
        params_.resize(params_.size() + e.size, 0.0);
        layout_.push_back(std::move(e));
    };
    const auto f1 = static_cast<std::uint64_t>(cfg_.f1);
    const auto f2 = static_cast<std::uint64_t>(cfg_.f2);
    const auto a = static_cast<std::uint64_t>(cfg_.attn_dim);
    const auto c = static_cast<std::uint64_t>(cfg_.cond_channels);
    add("conv1.w", {f1, kFeatureChannels, 27});
    add("conv1.b", {f1});
    add("conv2.w", {f2, f1, 27});
    add("conv2.b", {f2});
    add("time.w", {f2, f2});
    add("time.b", {f2});
    add("attn.wq", {a, f2});
    add("attn.wk", {a, c});
    add("attn.wv", {f2, c});
    add("conv3.w", {f1, f2, 27});
    add("conv3.b", {f1});
    add("conv4.w", {kFeatureChannels, f1, 27});
    add("conv4.b", {kFeatureChannels});
    grads_.assign(params_.size(), 0.0);

    Rng rng(cfg_.seed);
    for (const ParamEntry& e : layout_) {
        if (e.name.ends_with(".b")) continue;
        const double fan_in = static_cast<double>(e.size / e.shape[0]);
        const double scale = 1.0 / std::sqrt(std::max(fan_in, 1.0));
        for (std::size_t i = 0; i < e.size; ++i) params_[e.offset + i] = rng.normal() * scale;
    }
}

TinyVoxelNet::~TinyVoxelNet() = default;

double* TinyVoxelNet::param(const std::string& name) {
    for (const ParamEntry& e : layout_) {
        if (e.name == name) return params_.data() + e.offset;
    }
    throw InvalidParameter("TinyVoxelNet: unknown parameter " + name);
}

double* TinyVoxelNet::grad(const std::string& name) {
    for (const ParamEntry& e : layout_) {
        if (e.name == name) return grads_.data() + e.offset;
    }
    throw InvalidParameter("TinyVoxelNet: unknown parameter " + name);
}

Volume TinyVoxelNet::predict(const Volume& noisy, int t, const Eigen::MatrixXd& fused_tokens) {
    if (noisy.channels != kFeatureChannels) throw InvalidParameter("TinyVoxelNet: expects 14 channels");
    if (noisy.n < 4 || noisy.n % 4 != 0) {
        throw InvalidParameter("TinyVoxelNet: resolution must be a positive multiple of 4");
    }
    if (fused_tokens.cols() != cfg_.cond_channels) {
        throw InvalidParameter("TinyVoxelNet: conditioning channel mismatch");
    }

    cache_ = std::make_unique<Cache>();
    Cache& cc = *cache_;
    cc.input = noisy;
    cc.tokens = fused_tokens;

    cc.pre1 = conv3(noisy, param("conv1.w"), param("conv1.b"), cfg_.f1);
    cc.act1 = silu_forward(cc.pre1);
    cc.p1 = avg_pool2(cc.act1);

    cc.pre2 = conv3(cc.p1, param("conv2.w"), param("conv2.b"), cfg_.f2);
    cc.act2 = silu_forward(cc.pre2);
    cc.p2 = avg_pool2(cc.act2);

    cc.temb = time_embedding(t, cfg_.f2);
    const Eigen::Map<const Eigen::MatrixXd> wt(param("time.w"), cfg_.f2, cfg_.f2);
    const Eigen::Map<const Eigen::VectorXd> bt(param("time.b"), cfg_.f2);
    const Eigen::VectorXd tproj = wt * cc.temb + bt;

    cc.bottleneck_in = cc.p2;
    for (std::size_t cell = 0; cell < cc.bottleneck_in.cells(); ++cell) {
        for (int ch = 0; ch < cfg_.f2; ++ch) cc.bottleneck_in.at(cell, ch) += tproj[ch];
    }

    // Cross-attention: each bottleneck voxel queries the conditioning tokens.
    const Eigen::Map<const Eigen::MatrixXd> wq(param("attn.wq"), cfg_.attn_dim, cfg_.f2);
    const Eigen::Map<const Eigen::MatrixXd> wk(param("attn.wk"), cfg_.attn_dim, cfg_.cond_channels);
    const Eigen::Map<const Eigen::MatrixXd> wv(param("attn.wv"), cfg_.f2, cfg_.cond_channels);
    cc.keys = cc.tokens * wk.transpose();   // L x A
    cc.values = cc.tokens * wv.transpose(); // L x F2
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.attn_dim));

    const std::size_t cells = cc.bottleneck_in.cells();
    cc.queries.resize(static_cast<Eigen::Index>(cells), cfg_.attn_dim);
    cc.attn.resize(static_cast<Eigen::Index>(cells), cc.tokens.rows());
    cc.bottleneck_out = cc.bottleneck_in;
    for (std::size_t cell = 0; cell < cells; ++cell) {
        Eigen::VectorXd h(cfg_.f2);
        for (int ch = 0; ch < cfg_.f2; ++ch) h[ch] = cc.bottleneck_in.at(cell, ch);
        const Eigen::VectorXd q = wq * h;
        cc.queries.row(static_cast<Eigen::Index>(cell)) = q.transpose();
        Eigen::VectorXd s = cc.keys * q * scale;
        const double m = s.maxCoeff();
        Eigen::VectorXd e = (s.array() - m).exp();
        const Eigen::VectorXd attn = e / e.sum();
        cc.attn.row(static_cast<Eigen::Index>(cell)) = attn.transpose();
        const Eigen::VectorXd ctx = cc.values.transpose() * attn;
        for (int ch = 0; ch < cfg_.f2; ++ch) cc.bottleneck_out.at(cell, ch) += ctx[ch];
    }

    cc.up1 = upsample2(cc.bottleneck_out);
    cc.pre3 = conv3(cc.up1, param("conv3.w"), param("conv3.b"), cfg_.f1);
    cc.act3 = silu_forward(cc.pre3);
    cc.u1 = cc.act3;
    for (std::size_t i = 0; i < cc.u1.data.size(); ++i) cc.u1.data[i] += cc.p1.data[i];

    cc.up2 = upsample2(cc.u1);
    return conv3(cc.up2, param("conv4.w"), param("conv4.b"), kFeatureChannels);
}

void TinyVoxelNet::backward(const Volume& d_output) {
    if (!cache_) throw InvalidParameter("TinyVoxelNet::backward without a prior predict");
    Cache& cc = *cache_;

    Volume d_up2(cc.up2.n, cc.up2.channels);
    conv3_backward(cc.up2, d_output, param("conv4.w"), grad("conv4.w"), grad("conv4.b"), d_up2);
    Volume d_u1 = upsample2_backward(d_up2, cc.u1.n);

    // Skip connection: u1 = act3 + p1.
    Volume d_p1_skip = d_u1;
    const Volume d_pre3 = silu_backward(cc.pre3, d_u1);
    Volume d_up1(cc.up1.n, cc.up1.channels);
    conv3_backward(cc.up1, d_pre3, param("conv3.w"), grad("conv3.w"), grad("conv3.b"), d_up1);
    Volume d_bottleneck_out = upsample2_backward(d_up1, cc.bottleneck_out.n);

    // Attention backward.
    const Eigen::Map<const Eigen::MatrixXd> wq(param("attn.wq"), cfg_.attn_dim, cfg_.f2);
    Eigen::Map<Eigen::MatrixXd> gwq(grad("attn.wq"), cfg_.attn_dim, cfg_.f2);
    Eigen::Map<Eigen::MatrixXd> gwk(grad("attn.wk"), cfg_.attn_dim, cfg_.cond_channels);
    Eigen::Map<Eigen::MatrixXd> gwv(grad("attn.wv"), cfg_.f2, cfg_.cond_channels);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.attn_dim));

    Volume d_bottleneck_in = d_bottleneck_out; // residual path
    const Eigen::Index n_tokens = cc.tokens.rows();
    for (std::size_t cell = 0; cell < cc.bottleneck_in.cells(); ++cell) {
        Eigen::VectorXd d_ctx(cfg_.f2);
        for (int ch = 0; ch < cfg_.f2; ++ch) d_ctx[ch] = d_bottleneck_out.at(cell, ch);
        const Eigen::VectorXd attn = cc.attn.row(static_cast<Eigen::Index>(cell)).transpose();
        const Eigen::VectorXd q = cc.queries.row(static_cast<Eigen::Index>(cell)).transpose();

        const Eigen::VectorXd d_attn = cc.values * d_ctx;                  // L
        const double dot = attn.dot(d_attn);
        const Eigen::VectorXd d_scores = attn.array() * (d_attn.array() - dot);

        Eigen::VectorXd d_q = Eigen::VectorXd::Zero(cfg_.attn_dim);
        for (Eigen::Index j = 0; j < n_tokens; ++j) {
            gwv += attn[j] * d_ctx * cc.tokens.row(j);
            const Eigen::VectorXd d_key = d_scores[j] * scale * q;
            gwk += d_key * cc.tokens.row(j);
            d_q += d_scores[j] * scale * cc.keys.row(j).transpose();
        }
        Eigen::VectorXd h(cfg_.f2);
        for (int ch = 0; ch < cfg_.f2; ++ch) h[ch] = cc.bottleneck_in.at(cell, ch);
        gwq += d_q * h.transpose();
        const Eigen::VectorXd d_h = wq.transpose() * d_q;
        for (int ch = 0; ch < cfg_.f2; ++ch) d_bottleneck_in.at(cell, ch) += d_h[ch];
    }

    // Time projection receives the sum over voxels.
    Eigen::VectorXd d_tproj = Eigen::VectorXd::Zero(cfg_.f2);
    for (std::size_t cell = 0; cell < d_bottleneck_in.cells(); ++cell) {
        for (int ch = 0; ch < cfg_.f2; ++ch) d_tproj[ch] += d_bottleneck_in.at(cell, ch);
    }
    Eigen::Map<Eigen::MatrixXd>(grad("time.w"), cfg_.f2, cfg_.f2) += d_tproj * cc.temb.transpose();
    Eigen::Map<Eigen::VectorXd>(grad("time.b"), cfg_.f2) += d_tproj;

    const Volume d_act2 = avg_pool2_backward(d_bottleneck_in, cc.act2.n);
    const Volume d_pre2 = silu_backward(cc.pre2, d_act2);
    Volume d_p1(cc.p1.n, cc.p1.channels);
    conv3_backward(cc.p1, d_pre2, param("conv2.w"), grad("conv2.w"), grad("conv2.b"), d_p1);
    for (std::size_t i = 0; i < d_p1.data.size(); ++i) d_p1.data[i] += d_p1_skip.data[i];

    const Volume d_act1 = avg_pool2_backward(d_p1, cc.act1.n);
    const Volume d_pre1 = silu_backward(cc.pre1, d_act1);
    Volume d_input(cc.input.n, cc.input.channels);
    conv3_backward(cc.input, d_pre1, param("conv1.w"), grad("conv1.w"), grad("conv1.b"), d_input);
}

} // namespace vxs
