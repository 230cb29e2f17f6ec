// SPDX-License-Identifier: Apache-2.0
#include "vxs/io/ply.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "vxs/common.hpp"

namespace vxs {
namespace {

constexpr std::array<const char*, 14> kPropertyNames = {
    "x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1",
    "rot_2", "rot_3", "opacity", "f_dc_0", "f_dc_1", "f_dc_2"};

struct PlyProperty {
    std::string name;
    int byte_size = 0;
    bool is_double = false;
    bool is_float = false;
};

[[noreturn]] void fail(int line, const std::string& why) {
    throw IoError("ply: line " + std::to_string(line) + ": " + why);
}

int scalar_size(const std::string& type, int line) {
    if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
    if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
    if (type == "int" || type == "uint" || type == "int32" || type == "uint32" || type == "float" ||
        type == "float32") {
        return 4;
    }
    if (type == "double" || type == "float64") return 8;
    fail(line, "unknown property type '" + type + "'");
}

} // namespace

void write_ply(const std::string& path, const GaussianCloud& cloud) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("ply: cannot open for writing: " + path);
    out << "ply\n"
        << "format binary_little_endian 1.0\n"
        << "comment scale_* are log-scales, opacity is a logit, rot_* is wxyz\n"
        << "element vertex " << cloud.count() << "\n";
    for (const char* name : kPropertyNames) out << "property double " << name << "\n";
    out << "end_header\n";
    for (const Gaussian& g : cloud.gaussians) {
        std::array<double, 14> row = {g.position.x(), g.position.y(), g.position.z(),
                                      g.log_scale.x(), g.log_scale.y(), g.log_scale.z(),
                                      g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3],
                                      g.opacity_logit, g.color.x(), g.color.y(), g.color.z()};
        out.write(reinterpret_cast<const char*>(row.data()), sizeof(row));
    }
    if (!out) throw IoError("ply: write failed: " + path);
}

GaussianCloud read_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("ply: cannot open: " + path);

    std::string line;
    int line_no = 0;
    auto next_line = [&]() -> std::string& {
        if (!std::getline(in, line)) fail(line_no + 1, "unexpected end of header");
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };

    if (next_line() != "ply") fail(line_no, "missing 'ply' magic");
    if (next_line() != "format binary_little_endian 1.0") {
        fail(line_no, "only binary_little_endian 1.0 is supported");
    }

    std::size_t vertex_count = 0;
    bool in_vertex_element = false, seen_vertex = false;
    std::vector<PlyProperty> properties;
    while (true) {
        std::istringstream ls(next_line());
        std::string keyword;
        ls >> keyword;
        if (keyword == "comment" || keyword == "obj_info" || keyword.empty()) continue;
        if (keyword == "end_header") break;
        if (keyword == "element") {
            std::string name;
            long long count = -1;
            ls >> name >> count;
            if (name.empty() || count < 0) fail(line_no, "malformed element declaration");
            if (name == "vertex") {
                if (seen_vertex) fail(line_no, "duplicate vertex element");
                seen_vertex = true;
                in_vertex_element = true;
                vertex_count = static_cast<std::size_t>(count);
            } else {
                if (count != 0) fail(line_no, "unsupported extra element '" + name + "'");
                in_vertex_element = false;
            }
            continue;
        }
        if (keyword == "property") {
            std::string type;
            ls >> type;
            if (type == "list") fail(line_no, "list properties are not supported");
            std::string name;
            ls >> name;
            if (name.empty()) fail(line_no, "property without a name");
            if (!in_vertex_element) fail(line_no, "property outside vertex element");
            PlyProperty prop;
            prop.name = name;
            prop.byte_size = scalar_size(type, line_no);
            prop.is_double = (type == "double" || type == "float64");
            prop.is_float = (type == "float" || type == "float32");
            properties.push_back(std::move(prop));
            continue;
        }
        fail(line_no, "unexpected header keyword '" + keyword + "'");
    }
    if (!seen_vertex) fail(line_no, "no vertex element");

    std::array<int, 14> slots;
    slots.fill(-1);
    int stride = 0;
    std::vector<int> offsets(properties.size(), 0);
    for (std::size_t p = 0; p < properties.size(); ++p) {
        offsets[p] = stride;
        stride += properties[p].byte_size;
        for (int k = 0; k < 14; ++k) {
            if (properties[p].name == kPropertyNames[k]) {
                if (!properties[p].is_double && !properties[p].is_float) {
                    fail(line_no, "property '" + properties[p].name + "' must be float or double");
                }
                slots[k] = static_cast<int>(p);
            }
        }
    }
    for (int k = 0; k < 14; ++k) {
        if (slots[k] < 0) {
            throw IoError(std::string("ply: missing required property '") + kPropertyNames[k] + "'");
        }
    }

    GaussianCloud cloud;
    cloud.gaussians.resize(vertex_count);
    std::vector<char> row(static_cast<std::size_t>(stride));
    for (std::size_t i = 0; i < vertex_count; ++i) {
        in.read(row.data(), stride);
        if (in.gcount() != stride) throw IoError("ply: truncated vertex data");
        std::array<double, 14> vals;
        for (int k = 0; k < 14; ++k) {
            const PlyProperty& prop = properties[static_cast<std::size_t>(slots[k])];
            const char* src = row.data() + offsets[static_cast<std::size_t>(slots[k])];
            if (prop.is_double) {
                double v;
                std::memcpy(&v, src, sizeof(double));
                vals[k] = v;
            } else {
                float v;
                std::memcpy(&v, src, sizeof(float));
                vals[k] = static_cast<double>(v);
            }
        }
        Gaussian& g = cloud.gaussians[i];
        g.position = Eigen::Vector3d(vals[0], vals[1], vals[2]);
        g.log_scale = Eigen::Vector3d(vals[3], vals[4], vals[5]);
        g.rotation = Eigen::Vector4d(vals[6], vals[7], vals[8], vals[9]);
        g.opacity_logit = vals[10];
        g.color = Eigen::Vector3d(vals[11], vals[12], vals[13]);
    }
    return cloud;
}

} // namespace vxs
