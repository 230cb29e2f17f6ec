// SPDX-License-Identifier: Apache-2.0
#include "vxs/io/manifest.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace vxs {
namespace {

using nlohmann::json;

json camera_to_json(const Camera& cam) {
    std::vector<double> w2c(16, 0.0);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) w2c[static_cast<std::size_t>(r) * 4 + c] = cam.R(r, c);
        w2c[static_cast<std::size_t>(r) * 4 + 3] = cam.t[r];
    }
    w2c[15] = 1.0;
    return json{{"fx", cam.fx},        {"fy", cam.fy},   {"cx", cam.cx},
                {"cy", cam.cy},        {"width", cam.width}, {"height", cam.height},
                {"world_to_camera", w2c}};
}

template <typename T>
T require_field(const json& j, const char* name) {
    if (!j.contains(name)) throw IoError(std::string("manifest: missing field '") + name + "'");
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw IoError(std::string("manifest: malformed field '") + name + "'");
    }
}

Camera camera_from_json(const json& j) {
    Camera cam;
    cam.fx = require_field<double>(j, "fx");
    cam.fy = require_field<double>(j, "fy");
    cam.cx = require_field<double>(j, "cx");
    cam.cy = require_field<double>(j, "cy");
    cam.width = require_field<int>(j, "width");
    cam.height = require_field<int>(j, "height");
    const auto w2c = require_field<std::vector<double>>(j, "world_to_camera");
    if (w2c.size() != 16) throw IoError("manifest: world_to_camera must have 16 entries");
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) cam.R(r, c) = w2c[static_cast<std::size_t>(r) * 4 + c];
        cam.t[r] = w2c[static_cast<std::size_t>(r) * 4 + 3];
    }
    const double err = (cam.R * cam.R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (!(err <= 1e-6)) throw IoError("manifest: world_to_camera rotation not orthonormal (tolerance 1e-6)");
    // Snap tiny drift so downstream camera validation (1e-9) holds; exact
    // inputs pass through untouched, keeping round trips bitwise.
    if (err > 1e-12) {
        const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cam.R, Eigen::ComputeFullU | Eigen::ComputeFullV);
        cam.R = svd.matrixU() * svd.matrixV().transpose();
    }
    if (cam.fx <= 0.0 || cam.fy <= 0.0) throw IoError("manifest: focal lengths must be positive");
    if (cam.width < 1 || cam.height < 1) throw IoError("manifest: bad image size");
    return cam;
}

} // namespace

std::string manifest_relative(const std::string& manifest_path, const std::string& entry) {
    const std::filesystem::path p(entry);
    if (p.is_absolute()) return entry;
    return (std::filesystem::path(manifest_path).parent_path() / p).string();
}

void write_manifest(const std::string& path, const SceneManifest& manifest) {
    json views = json::array();
    for (const ManifestView& v : manifest.views) {
        json jv = camera_to_json(v.cam);
        jv["color"] = v.color_path;
        if (!v.depth_path.empty()) jv["depth"] = v.depth_path;
        if (!v.normal_path.empty()) jv["normal"] = v.normal_path;
        if (!v.alpha_path.empty()) jv["alpha"] = v.alpha_path;
        views.push_back(std::move(jv));
    }
    const json root{{"bounds",
                     {{"min", {manifest.bounds_lo.x(), manifest.bounds_lo.y(), manifest.bounds_lo.z()}},
                      {"max", {manifest.bounds_hi.x(), manifest.bounds_hi.y(), manifest.bounds_hi.z()}}}},
                    {"views", views}};
    std::ofstream out(path);
    if (!out) throw IoError("manifest: cannot open for writing: " + path);
    out << root.dump(2) << "\n";
    if (!out) throw IoError("manifest: write failed: " + path);
}

SceneManifest read_manifest(const std::string& path, bool check_files) {
    std::ifstream in(path);
    if (!in) throw IoError("manifest: cannot open: " + path);
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        throw IoError(std::string("manifest: parse error: ") + e.what());
    }

    SceneManifest manifest;
    if (!root.contains("bounds")) throw IoError("manifest: missing field 'bounds'");
    const auto lo = require_field<std::vector<double>>(root.at("bounds"), "min");
    const auto hi = require_field<std::vector<double>>(root.at("bounds"), "max");
    if (lo.size() != 3 || hi.size() != 3) throw IoError("manifest: bounds must be 3-vectors");
    manifest.bounds_lo = Eigen::Vector3d(lo[0], lo[1], lo[2]);
    manifest.bounds_hi = Eigen::Vector3d(hi[0], hi[1], hi[2]);

    if (!root.contains("views")) throw IoError("manifest: missing field 'views'");
    for (const json& jv : root.at("views")) {
        ManifestView view;
        view.cam = camera_from_json(jv);
        view.color_path = require_field<std::string>(jv, "color");
        if (jv.contains("depth")) view.depth_path = jv.at("depth").get<std::string>();
        if (jv.contains("normal")) view.normal_path = jv.at("normal").get<std::string>();
        if (jv.contains("alpha")) view.alpha_path = jv.at("alpha").get<std::string>();
        manifest.views.push_back(std::move(view));
    }
    if (manifest.views.empty()) throw IoError("manifest: needs at least one view");

    if (check_files) {
        for (const ManifestView& v : manifest.views) {
            for (const std::string& p : {v.color_path, v.depth_path, v.normal_path, v.alpha_path}) {
                if (p.empty()) continue;
                if (!std::filesystem::exists(manifest_relative(path, p))) {
                    throw IoError("manifest: referenced file does not exist: " + p);
                }
            }
        }
    }
    return manifest;
}

} // namespace vxs
