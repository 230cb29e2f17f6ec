// SPDX-License-Identifier: Apache-2.0
#include "vxs/cli/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "vxs/assignment.hpp"
#include "vxs/demo.hpp"
#include "vxs/diffusion.hpp"
#include "vxs/edc.hpp"
#include "vxs/gradcheck.hpp"
#include "vxs/io/checkpoint.hpp"
#include "vxs/io/embedding.hpp"
#include "vxs/io/image_io.hpp"
#include "vxs/io/manifest.hpp"
#include "vxs/io/ply.hpp"
#include "vxs/voxel_grid.hpp"

namespace vxs::cli {
namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kPerceiverSeed = 0x9e1c37b5ULL;

void write_resolved_config(CLI::App* sub, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "config.resolved.toml");
    out << sub->config_to_str(true, false);
}

std::vector<TrainingView> load_views(const std::string& manifest_path, const SceneManifest& manifest) {
    std::vector<TrainingView> views;
    for (const ManifestView& mv : manifest.views) {
        TrainingView view;
        view.cam = mv.cam;
        view.color = read_ppm(manifest_relative(manifest_path, mv.color_path));
        if (!mv.depth_path.empty()) view.depth = read_pfm(manifest_relative(manifest_path, mv.depth_path));
        if (!mv.normal_path.empty()) {
            view.normal = read_pfm_rgb(manifest_relative(manifest_path, mv.normal_path));
        }
        if (!mv.alpha_path.empty()) view.alpha = read_pfm(manifest_relative(manifest_path, mv.alpha_path));
        views.push_back(std::move(view));
    }
    return views;
}

std::string view_stem(int index) {
    std::ostringstream name;
    name << "view_";
    if (index < 10) name << '0';
    name << index;
    return name.str();
}

// --- demo ------------------------------------------------------------------

struct DemoArgs {
    std::string out;
    std::uint64_t seed = 7;
    int views = 16;
    int size = 64;
    int count = 1000;
    int objects = 4;
    int grid_n = 8;
    int cond_dim = 16;
    int threads = 1;
};

int cmd_demo(const DemoArgs& args) {
    DemoSceneConfig cfg;
    cfg.n_views = args.views;
    cfg.image_size = args.size;
    cfg.pretrained_count = args.count;
    cfg.seed = args.seed;
    RenderConfig render_cfg;
    render_cfg.threads = args.threads;

    const DemoScene scene = build_demo_scene(cfg, render_cfg);
    const fs::path out_dir(args.out);
    fs::create_directories(out_dir / "images");
    fs::create_directories(out_dir / "diffusion");

    SceneManifest manifest;
    manifest.bounds_lo = scene.bounds_lo;
    manifest.bounds_hi = scene.bounds_hi;
    for (std::size_t i = 0; i < scene.views.size(); ++i) {
        const TrainingView& view = scene.views[i];
        const std::string stem = view_stem(static_cast<int>(i));
        write_ppm((out_dir / "images" / (stem + ".ppm")).string(), view.color);
        write_pfm((out_dir / "images" / (stem + "_depth.pfm")).string(), *view.depth);
        write_pfm((out_dir / "images" / (stem + "_normal.pfm")).string(), *view.normal);
        write_pfm((out_dir / "images" / (stem + "_alpha.pfm")).string(), *view.alpha);
        ManifestView mv;
        mv.cam = view.cam;
        mv.color_path = "images/" + stem + ".ppm";
        mv.depth_path = "images/" + stem + "_depth.pfm";
        mv.normal_path = "images/" + stem + "_normal.pfm";
        mv.alpha_path = "images/" + stem + "_alpha.pfm";
        manifest.views.push_back(std::move(mv));
    }
    write_manifest((out_dir / "manifest.json").string(), manifest);
    write_ply((out_dir / "init.ply").string(), scene.pretrained);

    // Diffusion toy set: voxelized parametric objects plus synthetic
    // sketch-token / text conditions.
    const std::size_t cells = static_cast<std::size_t>(args.grid_n) * args.grid_n * args.grid_n;
    for (int k = 0; k < args.objects; ++k) {
        const GaussianCloud object = demo_object(k, cells, args.seed + 101);
        Eigen::Vector3d lo, hi;
        default_grid_bounds(object, lo, hi);
        const VoxelGrid grid = structure(object, lo, hi);
        write_voxel_grid((out_dir / "diffusion" / ("obj_" + std::to_string(k) + ".vxg")).string(), grid);

        Rng cond_rng(args.seed * 1000003 + static_cast<std::uint64_t>(k));
        Checkpoint cond;
        CheckpointArray sketch;
        sketch.shape = {static_cast<std::uint64_t>(kSketchTokens), static_cast<std::uint64_t>(args.cond_dim)};
        sketch.data.resize(static_cast<std::size_t>(kSketchTokens) * args.cond_dim);
        for (double& v : sketch.data) v = cond_rng.normal();
        cond.emplace("sketch_tokens", std::move(sketch));
        CheckpointArray text;
        text.shape = {1, static_cast<std::uint64_t>(args.cond_dim)};
        text.data.resize(static_cast<std::size_t>(args.cond_dim));
        for (double& v : text.data) v = cond_rng.normal();
        cond.emplace("text", std::move(text));
        write_checkpoint((out_dir / "diffusion" / ("obj_" + std::to_string(k) + ".cond")).string(), cond);
    }

    std::cout << "demo scene written to " << args.out << " (" << scene.pretrained.count()
              << " gaussians, " << scene.views.size() << " views, " << args.objects
              << " diffusion objects)\n";
    return 0;
}

// --- fit ---------------------------------------------------------------------

struct FitArgs {
    std::string manifest;
    std::string init_ply;
    std::string out;
    EDCConfig cfg;
    bool feature_loss = false;
    std::uint64_t seed = 0;
    int threads = 1;
};

int cmd_fit(const FitArgs& args) {
    const SceneManifest manifest = read_manifest(args.manifest);
    const std::vector<TrainingView> views = load_views(args.manifest, manifest);
    const GaussianCloud pretrained = read_ply(args.init_ply);

    EDCConfig cfg = args.cfg;
    cfg.render.threads = args.threads;
    if (cfg.scene_extent <= 0.0) {
        cfg.scene_extent = std::max((manifest.bounds_hi - manifest.bounds_lo).norm(), 1e-6);
    }

    const fs::path out_dir(args.out);
    fs::create_directories(out_dir);
    std::ofstream log((out_dir / "fit_log.csv").string());
    log << "iter,loss,count,delta_n,pruned,split,cloned\n";
    log.precision(10);

    std::unique_ptr<FeatureExtractor> fx;
    if (args.feature_loss) {
        fx = std::make_unique<RandomConvPyramid>(args.seed);
    } else {
        fx = std::make_unique<NullFeatureExtractor>();
    }

    const GaussianCloud fixed = fit_fixed_count(pretrained, views, cfg, *fx, &log);
    write_ply((out_dir / "fixed.ply").string(), fixed);
    std::cout << "fit: " << pretrained.count() << " -> " << fixed.count() << " gaussians (budget "
              << cfg.n_max << ")\n";
    return 0;
}

// --- render -----------------------------------------------------------------

struct RenderArgs {
    std::string ply;
    std::string manifest;
    std::string out;
    int threads = 1;
};

int cmd_render(const RenderArgs& args) {
    const SceneManifest manifest = read_manifest(args.manifest, /*check_files=*/false);
    const GaussianCloud cloud = read_ply(args.ply);
    RenderConfig cfg;
    cfg.threads = args.threads;

    const fs::path out_dir(args.out);
    fs::create_directories(out_dir);

    std::ostringstream report;
    report.precision(6);
    double psnr_sum = 0.0;
    int psnr_count = 0;
    for (std::size_t i = 0; i < manifest.views.size(); ++i) {
        const ManifestView& mv = manifest.views[i];
        const RenderOutput out = render(cloud, mv.cam, cfg);
        const std::string stem = view_stem(static_cast<int>(i));
        write_ppm((out_dir / (stem + ".ppm")).string(), out.color);
        write_pfm((out_dir / (stem + "_depth.pfm")).string(), out.depth);
        write_pfm((out_dir / (stem + "_normal.pfm")).string(), out.normal);

        const std::string gt_path = manifest_relative(args.manifest, mv.color_path);
        if (!mv.color_path.empty() && fs::exists(gt_path)) {
            const Image gt = read_ppm(gt_path);
            const double p = psnr(out.color, gt);
            report << stem << " psnr_db=" << p << "\n";
            psnr_sum += p;
            ++psnr_count;
        }
    }
    if (psnr_count > 0) {
        report << "mean psnr_db=" << psnr_sum / psnr_count << "\n";
    }
    std::ofstream report_file((out_dir / "psnr.txt").string());
    report_file << report.str();
    std::cout << report.str();
    return 0;
}

// --- voxelize / devoxelize ---------------------------------------------------

int cmd_voxelize(const std::string& ply_path, const std::string& out_path, int n) {
    const GaussianCloud cloud = read_ply(ply_path);
    const std::size_t cells = static_cast<std::size_t>(n) * n * n;
    if (cloud.count() != cells) {
        throw InvalidParameter("voxelize: cloud has " + std::to_string(cloud.count()) +
                               " gaussians, expected n^3 = " + std::to_string(cells));
    }
    Eigen::Vector3d lo, hi;
    default_grid_bounds(cloud, lo, hi);
    const VoxelGrid grid = structure(cloud, lo, hi);

    std::vector<Eigen::Vector3d> positions;
    positions.reserve(cloud.count());
    for (const Gaussian& g : cloud.gaussians) positions.push_back(g.position);
    const std::vector<Eigen::Vector3d> centers = voxel_centers(n, lo, hi);
    const double ot_cost = assignment_cost(positions, centers, grid.assignment);
    const double greedy_cost =
        assignment_cost(positions, centers, greedy_assignment(positions, centers));

    write_voxel_grid(out_path, grid);
    std::ostringstream line;
    line.precision(10);
    line << "ot_cost=" << ot_cost << " greedy_cost=" << greedy_cost << "\n";
    std::cout << line.str();
    return 0;
}

int cmd_devoxelize(const std::string& grid_path, const std::string& out_path) {
    const VoxelGrid grid = read_voxel_grid(grid_path);
    write_ply(out_path, unstructure(grid));
    return 0;
}

// --- align-eval ---------------------------------------------------------------

int cmd_align_eval(const std::string& tsv, double temperature, double margin,
                   const std::string& out_path) {
    const std::vector<EmbeddingRecord> records = read_embeddings(tsv);
    const std::map<Modality, EmbeddingBatch> batches = embeddings_to_batches(records);

    std::ostringstream report;
    report.precision(6);
    auto has = [&](Modality m) { return batches.count(m) > 0; };
    auto same_size = [&](Modality a, Modality b) {
        return batches.at(a).size() == batches.at(b).size();
    };

    const std::vector<std::pair<Modality, Modality>> pairs = {
        {Modality::Point, Modality::Image},
        {Modality::Point, Modality::Text},
        {Modality::Sketch, Modality::Image},
        {Modality::Point, Modality::Sketch}};
    for (const auto& [a, b] : pairs) {
        if (!has(a) || !has(b) || !same_size(a, b)) continue;
        report << "info_nce[" << modality_tag(a) << modality_tag(b)
               << "]=" << info_nce_pair(batches.at(a), batches.at(b), temperature) << "\n";
    }
    if (has(Modality::Point) && has(Modality::Text) && has(Modality::Image) &&
        same_size(Modality::Point, Modality::Text) && same_size(Modality::Point, Modality::Image)) {
        report << "stage1=" << stage1_loss(batches.at(Modality::Point), batches.at(Modality::Text),
                                           batches.at(Modality::Image), temperature)
               << "\n";
    }
    if (has(Modality::Sketch) && has(Modality::Point) && same_size(Modality::Sketch, Modality::Point)) {
        if (batches.at(Modality::Sketch).size() >= 2) {
            report << "triplet=" << triplet_loss(batches.at(Modality::Sketch),
                                                 batches.at(Modality::Point), margin)
                   << "\n";
        }
        if (has(Modality::Image) && same_size(Modality::Sketch, Modality::Image) &&
            batches.at(Modality::Sketch).size() >= 2) {
            ContrastConfig cfg;
            cfg.temperature = temperature;
            cfg.margin = margin;
            report << "stage2=" << stage2_loss(batches.at(Modality::Sketch),
                                               batches.at(Modality::Point),
                                               batches.at(Modality::Image), cfg)
                   << "\n";
        }
    }

    const std::vector<int> ks = {1, 5, 10};
    for (const auto& [a, b] : pairs) {
        if (!has(a) || !has(b) || !same_size(a, b)) continue;
        const std::vector<double> acc = retrieval_topk(batches.at(a), batches.at(b), ks);
        report << "retrieval[" << modality_tag(a) << "->" << modality_tag(b) << "] top1=" << acc[0]
               << " top5=" << acc[1] << " top10=" << acc[2] << "\n";
    }

    std::cout << report.str();
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw IoError("align-eval: cannot open report for writing: " + out_path);
        out << report.str();
    }
    return 0;
}

// --- diffusion train / sample --------------------------------------------------

struct DiffuseTrainArgs {
    std::string data;
    std::string out;
    DiffusionConfig cfg;
    int render_views = 2;
    int render_size = 32;
    int threads = 1;
};

std::vector<std::string> dataset_objects(const std::string& dir) {
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".vxg") stems.push_back(entry.path().stem().string());
    }
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw IoError("diffusion dataset: no .vxg grids in " + dir);
    return stems;
}

TrainItem load_train_item(const std::string& dir, const std::string& stem,
                          const PerceiverWeights& reducer, int render_views, int render_size,
                          const RenderConfig& render_cfg) {
    TrainItem item;
    item.grid = read_voxel_grid((fs::path(dir) / (stem + ".vxg")).string());
    const Checkpoint cond = read_checkpoint((fs::path(dir) / (stem + ".cond")).string());
    const auto& sketch = cond.at("sketch_tokens");
    const auto& text = cond.at("text");
    const auto rows = static_cast<Eigen::Index>(sketch.shape.at(0));
    const auto cols = static_cast<Eigen::Index>(sketch.shape.at(1));
    Eigen::MatrixXd sketch_tokens(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            sketch_tokens(r, c) = sketch.data[static_cast<std::size_t>(r) * cols + c];
        }
    }
    Eigen::MatrixXd text_row(1, cols);
    for (Eigen::Index c = 0; c < cols; ++c) text_row(0, c) = text.data[static_cast<std::size_t>(c)];
    item.condition = ConditionBundle::build(sketch_tokens, text_row, reducer);

    // Self-consistent refinement targets: render the training grid's cloud.
    const GaussianCloud cloud = unstructure(item.grid);
    const std::vector<Camera> cams =
        ring_cameras(render_views, render_size, item.grid.bounds_lo, item.grid.bounds_hi);
    for (const Camera& cam : cams) {
        RenderOutput out = render(cloud, cam, render_cfg);
        TrainingView view;
        view.cam = cam;
        view.color = std::move(out.color);
        view.depth = std::move(out.depth);
        view.normal = std::move(out.normal);
        view.alpha = std::move(out.alpha);
        item.views.push_back(std::move(view));
    }
    return item;
}

void checkpoint_put(Checkpoint& ckp, const std::string& name, std::vector<std::uint64_t> shape,
                    const double* data, std::size_t size) {
    CheckpointArray array;
    array.shape = std::move(shape);
    array.data.assign(data, data + size);
    ckp.emplace(name, std::move(array));
}

void checkpoint_put_matrix(Checkpoint& ckp, const std::string& name, const Eigen::MatrixXd& m) {
    CheckpointArray array;
    array.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    array.data.resize(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            array.data[static_cast<std::size_t>(r) * m.cols() + c] = m(r, c);
        }
    }
    ckp.emplace(name, std::move(array));
}

Eigen::MatrixXd checkpoint_matrix(const Checkpoint& ckp, const std::string& name) {
    const auto it = ckp.find(name);
    if (it == ckp.end()) throw IoError("checkpoint: missing array " + name);
    if (it->second.shape.size() != 2) throw IoError("checkpoint: " + name + " is not a matrix");
    const auto rows = static_cast<Eigen::Index>(it->second.shape[0]);
    const auto cols = static_cast<Eigen::Index>(it->second.shape[1]);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = it->second.data[static_cast<std::size_t>(r) * cols + c];
        }
    }
    return m;
}

int cmd_diffuse_train(const DiffuseTrainArgs& args) {
    RenderConfig render_cfg;
    render_cfg.threads = args.threads;
    const std::vector<std::string> stems = dataset_objects(args.data);

    // The reducer weights ride along in the checkpoint so sampling is
    // self-contained.
    const TrainItem probe = [&] {
        const Checkpoint cond = read_checkpoint((fs::path(args.data) / (stems[0] + ".cond")).string());
        TrainItem t;
        t.grid.n = static_cast<int>(cond.at("sketch_tokens").shape.at(1));
        return t;
    }();
    const int cond_dim = probe.grid.n;
    const PerceiverWeights reducer = PerceiverWeights::random(cond_dim, 2 * cond_dim, kPerceiverSeed);

    std::vector<TrainItem> items;
    for (const std::string& stem : stems) {
        items.push_back(load_train_item(args.data, stem, reducer, args.render_views, args.render_size,
                                        render_cfg));
    }

    DiffusionConfig cfg = args.cfg;
    cfg.render = render_cfg;
    TinyVoxelNetConfig net_cfg;
    net_cfg.cond_channels = cond_dim;
    net_cfg.seed = cfg.seed + 1;
    TinyVoxelNet net(net_cfg);

    const fs::path out_dir(args.out);
    fs::create_directories(out_dir);
    std::ofstream log((out_dir / "train_log.csv").string());
    log << "iter,diffusion,image,depth,normal,total\n";
    log.precision(10);

    NullFeatureExtractor null_fx;
    RandomConvPyramid pyramid_fx(cfg.seed);
    const FeatureExtractor& fx = static_cast<const FeatureExtractor&>(pyramid_fx);
    DiffusionTrainer trainer(net, cfg, fx);
    (void)null_fx;

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        const StepLosses losses = trainer.train_step(items, iter);
        DiffusionTrainer::log_row(log, iter, losses);
    }

    Checkpoint ckp;
    for (const ParamEntry& e : net.parameter_layout()) {
        checkpoint_put(ckp, "net." + e.name, e.shape, net.parameters().data() + e.offset, e.size);
        checkpoint_put(ckp, "ema." + e.name, e.shape, trainer.ema().shadow.data() + e.offset, e.size);
    }
    checkpoint_put_matrix(ckp, "perceiver.queries", reducer.queries);
    checkpoint_put_matrix(ckp, "perceiver.w_key", reducer.w_key);
    checkpoint_put_matrix(ckp, "perceiver.w_value", reducer.w_value);
    checkpoint_put_matrix(ckp, "perceiver.ff1", reducer.ff1);
    checkpoint_put_matrix(ckp, "perceiver.ff2", reducer.ff2);
    checkpoint_put(ckp, "perceiver.fb1", {static_cast<std::uint64_t>(reducer.fb1.size())},
                   reducer.fb1.data(), static_cast<std::size_t>(reducer.fb1.size()));
    checkpoint_put(ckp, "perceiver.fb2", {static_cast<std::uint64_t>(reducer.fb2.size())},
                   reducer.fb2.data(), static_cast<std::size_t>(reducer.fb2.size()));
    {
        const std::vector<double> meta = {static_cast<double>(net_cfg.f1), static_cast<double>(net_cfg.f2),
                                          static_cast<double>(net_cfg.attn_dim),
                                          static_cast<double>(net_cfg.cond_channels)};
        checkpoint_put(ckp, "meta.net", {4}, meta.data(), meta.size());
        const std::vector<double> sched = {static_cast<double>(cfg.steps), cfg.beta_start, cfg.beta_end};
        checkpoint_put(ckp, "meta.schedule", {3}, sched.data(), sched.size());
        const std::vector<double> grid_meta = {
            static_cast<double>(items[0].grid.n),
            items[0].grid.bounds_lo.x(), items[0].grid.bounds_lo.y(), items[0].grid.bounds_lo.z(),
            items[0].grid.bounds_hi.x(), items[0].grid.bounds_hi.y(), items[0].grid.bounds_hi.z()};
        checkpoint_put(ckp, "meta.grid", {7}, grid_meta.data(), grid_meta.size());
    }
    write_checkpoint((out_dir / "model.ckp").string(), ckp);
    std::cout << "diffusion training finished (" << cfg.max_iters << " iterations, "
              << items.size() << " objects)\n";
    return 0;
}

struct DiffuseSampleArgs {
    std::string checkpoint;
    std::string data;
    std::string out_ply;
    std::string out_grid;
    int object = 0;
    std::uint64_t seed = 0;
    bool use_raw_weights = false;
};

int cmd_diffuse_sample(const DiffuseSampleArgs& args) {
    const Checkpoint ckp = read_checkpoint(args.checkpoint);
    const auto& net_meta = ckp.at("meta.net").data;
    TinyVoxelNetConfig net_cfg;
    net_cfg.f1 = static_cast<int>(net_meta.at(0));
    net_cfg.f2 = static_cast<int>(net_meta.at(1));
    net_cfg.attn_dim = static_cast<int>(net_meta.at(2));
    net_cfg.cond_channels = static_cast<int>(net_meta.at(3));
    TinyVoxelNet net(net_cfg);
    const std::string prefix = args.use_raw_weights ? "net." : "ema.";
    for (const ParamEntry& e : net.parameter_layout()) {
        const auto it = ckp.find(prefix + e.name);
        if (it == ckp.end()) throw IoError("checkpoint: missing array " + prefix + e.name);
        if (it->second.data.size() != e.size) throw IoError("checkpoint: size mismatch for " + e.name);
        std::copy(it->second.data.begin(), it->second.data.end(), net.parameters().begin() + e.offset);
    }

    PerceiverWeights reducer;
    reducer.queries = checkpoint_matrix(ckp, "perceiver.queries");
    reducer.w_key = checkpoint_matrix(ckp, "perceiver.w_key");
    reducer.w_value = checkpoint_matrix(ckp, "perceiver.w_value");
    reducer.ff1 = checkpoint_matrix(ckp, "perceiver.ff1");
    reducer.ff2 = checkpoint_matrix(ckp, "perceiver.ff2");
    reducer.fb1 = Eigen::Map<const Eigen::VectorXd>(ckp.at("perceiver.fb1").data.data(),
                                                    static_cast<Eigen::Index>(ckp.at("perceiver.fb1").data.size()));
    reducer.fb2 = Eigen::Map<const Eigen::VectorXd>(ckp.at("perceiver.fb2").data.data(),
                                                    static_cast<Eigen::Index>(ckp.at("perceiver.fb2").data.size()));

    const std::vector<std::string> stems = dataset_objects(args.data);
    if (args.object < 0 || args.object >= static_cast<int>(stems.size())) {
        throw InvalidParameter("diffuse-sample: object index out of range");
    }
    const Checkpoint cond =
        read_checkpoint((fs::path(args.data) / (stems[static_cast<std::size_t>(args.object)] + ".cond")).string());
    const Eigen::MatrixXd sketch_tokens = checkpoint_matrix(cond, "sketch_tokens");
    const Eigen::MatrixXd text = checkpoint_matrix(cond, "text");
    const ConditionBundle bundle = ConditionBundle::build(sketch_tokens, text, reducer);

    const auto& grid_meta = ckp.at("meta.grid").data;
    const auto& sched_meta = ckp.at("meta.schedule").data;
    DiffusionConfig cfg;
    cfg.steps = static_cast<int>(sched_meta.at(0));
    cfg.beta_start = sched_meta.at(1);
    cfg.beta_end = sched_meta.at(2);
    cfg.seed = args.seed;

    const VoxelGrid grid = sample(net, bundle.fused, cfg, static_cast<int>(grid_meta.at(0)),
                                  Eigen::Vector3d(grid_meta.at(1), grid_meta.at(2), grid_meta.at(3)),
                                  Eigen::Vector3d(grid_meta.at(4), grid_meta.at(5), grid_meta.at(6)),
                                  args.seed);
    if (!args.out_grid.empty()) write_voxel_grid(args.out_grid, grid);
    write_ply(args.out_ply, unstructure(grid));
    std::cout << "sampled grid n=" << grid.n << " -> " << args.out_ply << "\n";
    return 0;
}

// --- gradcheck ----------------------------------------------------------------

int cmd_gradcheck(const std::string& component, std::uint64_t seed, bool inject_flip) {
    std::vector<GradReport> reports;
    if (component == "all" || component == "rasterizer") {
        reports.push_back(gradcheck_rasterizer(seed, inject_flip));
    }
    if (component == "all" || component == "alignment") {
        for (GradReport& r : gradcheck_alignment(seed)) reports.push_back(std::move(r));
    }
    if (component == "all" || component == "predictor") {
        reports.push_back(gradcheck_predictor(seed));
    }
    if (reports.empty()) throw InvalidParameter("gradcheck: unknown component " + component);

    bool all_pass = true;
    std::ostringstream out;
    out.precision(6);
    for (const GradReport& r : reports) {
        out << (r.pass ? "PASS" : "FAIL") << " " << r.group << " max_rel_err=" << r.max_rel_err
            << " frac_ok=" << r.frac_ok << " tol=" << r.tolerance << "\n";
        all_pass = all_pass && r.pass;
    }
    std::cout << out.str();
    return all_pass ? 0 : 1;
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"Fixed-budget Gaussian splatting, OT voxelization and a toy voxel diffusion pipeline"};
    app.require_subcommand(1);

    auto add_config = [](CLI::App* sub) {
        sub->set_config("--config", "", "key=value config file (flags win)");
        sub->allow_config_extras(CLI::config_extras_mode::error);
    };

    // demo
    DemoArgs demo_args;
    CLI::App* demo = app.add_subcommand("demo", "generate the synthetic desk-scale scene and toy dataset");
    demo->add_option("--out", demo_args.out)->required();
    demo->add_option("--seed", demo_args.seed);
    demo->add_option("--views", demo_args.views)->check(CLI::PositiveNumber);
    demo->add_option("--size", demo_args.size)->check(CLI::PositiveNumber);
    demo->add_option("--count", demo_args.count)->check(CLI::PositiveNumber);
    demo->add_option("--objects", demo_args.objects)->check(CLI::PositiveNumber);
    demo->add_option("--grid-n", demo_args.grid_n)->check(CLI::PositiveNumber);
    demo->add_option("--cond-dim", demo_args.cond_dim)->check(CLI::PositiveNumber);
    demo->add_option("--threads", demo_args.threads)->check(CLI::PositiveNumber);
    add_config(demo);

    // fit
    FitArgs fit_args;
    CLI::App* fit = app.add_subcommand("fit", "fixed-budget densification from a pretrained cloud");
    fit->add_option("--manifest", fit_args.manifest)->required();
    fit->add_option("--init", fit_args.init_ply)->required();
    fit->add_option("--out", fit_args.out)->required();
    fit->add_option("--n-max", fit_args.cfg.n_max)->check(CLI::PositiveNumber);
    fit->add_option("--max-iters", fit_args.cfg.max_iters);
    fit->add_option("--refine-interval", fit_args.cfg.refine_interval)->check(CLI::PositiveNumber);
    fit->add_option("--sample-fraction", fit_args.cfg.sample_fraction);
    fit->add_option("--grad-threshold", fit_args.cfg.grad_threshold);
    fit->add_option("--scale-threshold", fit_args.cfg.scale_threshold);
    fit->add_option("--opacity-prune", fit_args.cfg.opacity_prune);
    fit->add_option("--too-large-frac", fit_args.cfg.too_large_frac);
    fit->add_option("--lr-position", fit_args.cfg.lr_position);
    fit->add_option("--lr-rotation", fit_args.cfg.lr_rotation);
    fit->add_option("--lr-log-scale", fit_args.cfg.lr_log_scale);
    fit->add_option("--lr-opacity", fit_args.cfg.lr_opacity);
    fit->add_option("--lr-color", fit_args.cfg.lr_color);
    fit->add_flag("--use-depth", fit_args.cfg.use_depth_loss);
    fit->add_flag("--use-normal", fit_args.cfg.use_normal_loss);
    fit->add_flag("--feature-loss", fit_args.feature_loss);
    fit->add_option("--seed", fit_args.seed);
    fit->add_option("--threads", fit_args.threads)->check(CLI::PositiveNumber);
    add_config(fit);

    // render
    RenderArgs render_args;
    CLI::App* render_cmd = app.add_subcommand("render", "render a PLY from manifest cameras");
    render_cmd->add_option("--ply", render_args.ply)->required();
    render_cmd->add_option("--manifest", render_args.manifest)->required();
    render_cmd->add_option("--out", render_args.out)->required();
    render_cmd->add_option("--threads", render_args.threads)->check(CLI::PositiveNumber);
    add_config(render_cmd);

    // voxelize
    std::string vox_ply, vox_out;
    int vox_n = 8;
    CLI::App* voxelize = app.add_subcommand("voxelize", "structure a PLY into an OT voxel grid");
    voxelize->add_option("--ply", vox_ply)->required();
    voxelize->add_option("--out", vox_out)->required();
    voxelize->add_option("--n", vox_n)->check(CLI::PositiveNumber);
    add_config(voxelize);

    // devoxelize
    std::string devox_grid, devox_out;
    CLI::App* devoxelize = app.add_subcommand("devoxelize", "decode a voxel grid back to a PLY");
    devoxelize->add_option("--grid", devox_grid)->required();
    devoxelize->add_option("--out", devox_out)->required();
    add_config(devoxelize);

    // align-eval
    std::string align_tsv, align_out;
    double align_tau = 0.07, align_margin = 0.5;
    CLI::App* align_eval = app.add_subcommand("align-eval", "losses and retrieval table for embedding TSVs");
    align_eval->add_option("--embeddings", align_tsv)->required();
    align_eval->add_option("--tau", align_tau);
    align_eval->add_option("--margin", align_margin);
    align_eval->add_option("--out", align_out);
    add_config(align_eval);

    // diffuse-train
    DiffuseTrainArgs dt_args;
    CLI::App* diffuse_train = app.add_subcommand("diffuse-train", "train the toy voxel denoiser");
    diffuse_train->add_option("--data", dt_args.data)->required();
    diffuse_train->add_option("--out", dt_args.out)->required();
    diffuse_train->add_option("--steps", dt_args.cfg.max_iters)->check(CLI::PositiveNumber);
    diffuse_train->add_option("--t-steps", dt_args.cfg.steps)->check(CLI::PositiveNumber);
    diffuse_train->add_option("--warmup-fraction", dt_args.cfg.warmup_fraction);
    diffuse_train->add_option("--lr", dt_args.cfg.lr);
    diffuse_train->add_option("--ema-decay", dt_args.cfg.ema_decay);
    diffuse_train->add_option("--seed", dt_args.cfg.seed);
    diffuse_train->add_option("--w-diffusion", dt_args.cfg.weights.diffusion);
    diffuse_train->add_option("--w-image", dt_args.cfg.weights.image);
    diffuse_train->add_option("--w-depth", dt_args.cfg.weights.depth);
    diffuse_train->add_option("--w-normal", dt_args.cfg.weights.normal);
    diffuse_train->add_option("--render-views", dt_args.render_views)->check(CLI::PositiveNumber);
    diffuse_train->add_option("--render-size", dt_args.render_size)->check(CLI::PositiveNumber);
    diffuse_train->add_option("--threads", dt_args.threads)->check(CLI::PositiveNumber);
    add_config(diffuse_train);

    // diffuse-sample
    DiffuseSampleArgs ds_args;
    CLI::App* diffuse_sample = app.add_subcommand("diffuse-sample", "draw a grid and decode it to a PLY");
    diffuse_sample->add_option("--checkpoint", ds_args.checkpoint)->required();
    diffuse_sample->add_option("--data", ds_args.data)->required();
    diffuse_sample->add_option("--out", ds_args.out_ply)->required();
    diffuse_sample->add_option("--grid-out", ds_args.out_grid);
    diffuse_sample->add_option("--object", ds_args.object);
    diffuse_sample->add_option("--seed", ds_args.seed);
    diffuse_sample->add_flag("--raw-weights", ds_args.use_raw_weights,
                             "sample with training weights instead of EMA");
    add_config(diffuse_sample);

    // gradcheck
    std::string gc_component = "all";
    std::uint64_t gc_seed = 42;
    bool gc_flip = false;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gradcheck->add_option("--component", gc_component)
        ->check(CLI::IsMember({"all", "rasterizer", "alignment", "predictor"}));
    gradcheck->add_option("--seed", gc_seed);
    gradcheck->add_flag("--inject-flip", gc_flip)->group(""); // hidden mutation probe
    add_config(gradcheck);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (demo->parsed()) {
            write_resolved_config(demo, demo_args.out);
            return cmd_demo(demo_args);
        }
        if (fit->parsed()) {
            write_resolved_config(fit, fit_args.out);
            return cmd_fit(fit_args);
        }
        if (render_cmd->parsed()) {
            write_resolved_config(render_cmd, render_args.out);
            return cmd_render(render_args);
        }
        if (voxelize->parsed()) return cmd_voxelize(vox_ply, vox_out, vox_n);
        if (devoxelize->parsed()) return cmd_devoxelize(devox_grid, devox_out);
        if (align_eval->parsed()) return cmd_align_eval(align_tsv, align_tau, align_margin, align_out);
        if (diffuse_train->parsed()) {
            write_resolved_config(diffuse_train, dt_args.out);
            return cmd_diffuse_train(dt_args);
        }
        if (diffuse_sample->parsed()) return cmd_diffuse_sample(ds_args);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_component, gc_seed, gc_flip);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const InvalidParameter& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace vxs::cli
