// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "vxs/common.hpp"

namespace vxs {

// Row-major H x W x 3 buffer, interleaved channels.
struct Image {
    int width = 0, height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0) {}

    double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::size_t size() const { return data.size(); }
};

// Row-major H x W scalar buffer.
struct ScalarMap {
    int width = 0, height = 0;
    std::vector<double> data;

    ScalarMap() = default;
    ScalarMap(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0.0) {}

    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return data.size(); }
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (a.width != b.width || a.height != b.height) {
        throw InvalidParameter(std::string(what) + ": image dimensions differ");
    }
}

inline void require_same_shape(const ScalarMap& a, const ScalarMap& b, const char* what) {
    if (a.width != b.width || a.height != b.height) {
        throw InvalidParameter(std::string(what) + ": map dimensions differ");
    }
}

} // namespace vxs
