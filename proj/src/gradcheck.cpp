// SPDX-License-Identifier: Apache-2.0
#include "vxs/gradcheck.hpp"

#include <cmath>

#include "vxs/alignment.hpp"
#include "vxs/camera.hpp"
#include "vxs/gaussian.hpp"
#include "vxs/perceiver.hpp"
#include "vxs/predictor.hpp"
#include "vxs/rasterizer.hpp"

namespace vxs {
namespace {

struct ErrTally {
    double max_rel = 0.0;
    std::size_t ok = 0, total = 0;

    void add(double analytic, double numeric, double rel_tol, double abs_floor) {
        const double err = std::abs(analytic - numeric);
        const double denom = std::max(std::abs(analytic), std::abs(numeric));
        const double rel = denom > 0.0 ? err / denom : 0.0;
        ++total;
        if (err <= abs_floor || rel < rel_tol) {
            ++ok;
        }
        if (denom > abs_floor) max_rel = std::max(max_rel, rel);
    }

    GradReport report(const std::string& group, double tol, double required_frac) const {
        GradReport r;
        r.group = group;
        r.max_rel_err = max_rel;
        r.frac_ok = total > 0 ? static_cast<double>(ok) / static_cast<double>(total) : 1.0;
        r.tolerance = tol;
        r.pass = r.frac_ok >= required_frac;
        return r;
    }
};

GaussianCloud random_cloud(Rng& rng, std::size_t count) {
    GaussianCloud cloud;
    for (std::size_t i = 0; i < count; ++i) {
        Gaussian g;
        g.position = Eigen::Vector3d(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.4, 0.4));
        Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        g.rotation = q.normalized();
        g.log_scale = Eigen::Vector3d(std::log(rng.uniform(0.08, 0.3)), std::log(rng.uniform(0.08, 0.3)),
                                      std::log(rng.uniform(0.08, 0.3)));
        g.opacity_logit = rng.uniform(-1.0, 2.0);
        g.color = Eigen::Vector3d(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9));
        cloud.gaussians.push_back(g);
    }
    return cloud;
}

double raw_param(const Gaussian& g, int k) {
    if (k < 3) return g.position[k];
    if (k < 7) return g.rotation[k - 3];
    if (k < 10) return g.log_scale[k - 7];
    if (k == 10) return g.opacity_logit;
    return g.color[k - 11];
}

void set_raw_param(Gaussian& g, int k, double v) {
    if (k < 3) {
        g.position[k] = v;
    } else if (k < 7) {
        g.rotation[k - 3] = v;
    } else if (k < 10) {
        g.log_scale[k - 7] = v;
    } else if (k == 10) {
        g.opacity_logit = v;
    } else {
        g.color[k - 11] = v;
    }
}

double analytic_param(const ParamGradients& grads, std::size_t i, int k) {
    if (k < 3) return grads.position[i][k];
    if (k < 7) return grads.rotation[i][k - 3];
    if (k < 10) return grads.log_scale[i][k - 7];
    if (k == 10) return grads.opacity_logit[i];
    return grads.color[i][k - 11];
}

} // namespace

GradReport gradcheck_rasterizer(std::uint64_t seed, bool inject_flip) {
    Rng rng(seed);
    const GaussianCloud cloud = random_cloud(rng, 5);
    const Camera cam = look_at(Eigen::Vector3d(0.3, -0.2, -2.5), Eigen::Vector3d::Zero(),
                               Eigen::Vector3d::UnitZ(), 10.0, 10.0, 8, 8);
    RenderConfig cfg;

    Image w_color(cam.width, cam.height), w_normal(cam.width, cam.height);
    ScalarMap w_depth(cam.width, cam.height);
    for (double& v : w_color.data) v = rng.uniform(-1.0, 1.0);
    for (double& v : w_normal.data) v = rng.uniform(-1.0, 1.0);
    for (double& v : w_depth.data) v = rng.uniform(-1.0, 1.0);

    auto loss = [&](const GaussianCloud& c) {
        const RenderOutput out = render(c, cam, cfg);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.color.data.size(); ++i) acc += out.color.data[i] * w_color.data[i];
        for (std::size_t i = 0; i < out.normal.data.size(); ++i) acc += out.normal.data[i] * w_normal.data[i];
        for (std::size_t i = 0; i < out.depth.data.size(); ++i) acc += out.depth.data[i] * w_depth.data[i];
        return acc;
    };

    ParamGradients grads = render_backward(cloud, cam, w_color, w_depth, w_normal, cfg);
    if (inject_flip) grads.position[0][0] = -grads.position[0][0];

    const double h = 1e-4;
    ErrTally tally;
    for (std::size_t i = 0; i < cloud.count(); ++i) {
        for (int k = 0; k < 14; ++k) {
            GaussianCloud perturbed = cloud;
            const double base = raw_param(perturbed[i], k);
            set_raw_param(perturbed[i], k, base + h);
            const double up = loss(perturbed);
            set_raw_param(perturbed[i], k, base - h);
            const double down = loss(perturbed);
            const double numeric = (up - down) / (2.0 * h);
            tally.add(analytic_param(grads, i, k), numeric, 1e-3, 1e-9);
        }
    }
    return tally.report("rasterizer", 1e-3, 0.99);
}

std::vector<GradReport> gradcheck_alignment(std::uint64_t seed) {
    Rng rng(seed);
    const int n = 5, dim = 8;
    auto random_matrix = [&rng](int rows, int cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
        return m;
    };
    const Eigen::MatrixXd s = random_matrix(n, dim), p = random_matrix(n, dim), im = random_matrix(n, dim);
    const double h = 1e-5;
    ContrastConfig cfg;

    std::vector<GradReport> reports;

    auto check = [&](const std::string& name, auto&& value_fn, const std::vector<const Eigen::MatrixXd*>& inputs,
                     const std::vector<Eigen::MatrixXd>& analytic) {
        ErrTally tally;
        for (std::size_t m = 0; m < inputs.size(); ++m) {
            Eigen::MatrixXd probe = *inputs[m];
            for (Eigen::Index e = 0; e < probe.size(); ++e) {
                const double base = probe.data()[e];
                probe.data()[e] = base + h;
                const double up = value_fn(m, probe);
                probe.data()[e] = base - h;
                const double down = value_fn(m, probe);
                probe.data()[e] = base;
                tally.add(analytic[m].data()[e], (up - down) / (2.0 * h), 1e-4, 1e-10);
            }
        }
        reports.push_back(tally.report(name, 1e-4, 1.0));
    };

    {
        Eigen::MatrixXd da, db;
        info_nce_pair_grad(s, p, cfg.temperature, &da, &db);
        check(
            "info_nce",
            [&](std::size_t m, const Eigen::MatrixXd& probe) {
                return info_nce_pair_grad(m == 0 ? probe : s, m == 1 ? probe : p, cfg.temperature,
                                          nullptr, nullptr);
            },
            {&s, &p}, {da, db});
    }
    {
        Eigen::MatrixXd ds, dp;
        triplet_loss_grad(s, p, cfg.margin, &ds, &dp);
        check(
            "triplet",
            [&](std::size_t m, const Eigen::MatrixXd& probe) {
                return triplet_loss_grad(m == 0 ? probe : s, m == 1 ? probe : p, cfg.margin, nullptr,
                                         nullptr);
            },
            {&s, &p}, {ds, dp});
    }
    {
        Eigen::MatrixXd ds, dp, di;
        stage2_loss_grad(s, p, im, cfg, &ds, &dp, &di);
        check(
            "stage2",
            [&](std::size_t m, const Eigen::MatrixXd& probe) {
                return stage2_loss_grad(m == 0 ? probe : s, m == 1 ? probe : p, m == 2 ? probe : im,
                                        cfg, nullptr, nullptr, nullptr);
            },
            {&s, &p, &im}, {ds, dp, di});
    }
    return reports;
}

GradReport gradcheck_predictor(std::uint64_t seed) {
    TinyVoxelNetConfig cfg;
    cfg.seed = seed;
    TinyVoxelNet net(cfg);
    Rng rng(seed + 17);

    const int n = 4;
    Volume input(n, kFeatureChannels);
    for (double& v : input.data) v = rng.normal();
    Eigen::MatrixXd tokens(kReducedTokens + 1, cfg.cond_channels);
    for (Eigen::Index i = 0; i < tokens.size(); ++i) tokens.data()[i] = rng.normal();
    const int t = 3;

    Volume w(n, kFeatureChannels);
    for (double& v : w.data) v = rng.uniform(-1.0, 1.0);
    auto loss = [&]() {
        const Volume out = net.predict(input, t, tokens);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.data.size(); ++i) acc += out.data[i] * w.data[i];
        return acc;
    };

    loss();
    net.zero_grad();
    net.backward(w);
    const std::vector<double> analytic = net.gradients();

    const double h = 1e-4;
    ErrTally tally;
    std::vector<double>& params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double base = params[i];
        params[i] = base + h;
        const double up = loss();
        params[i] = base - h;
        const double down = loss();
        params[i] = base;
        tally.add(analytic[i], (up - down) / (2.0 * h), 1e-3, 1e-9);
    }
    return tally.report("predictor", 1e-3, 0.999);
}

} // namespace vxs
