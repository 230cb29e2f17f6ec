// SPDX-License-Identifier: Apache-2.0
#include "vxs/io/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

namespace vxs {
namespace {

// Reads one whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in, const char* what) {
    std::string token;
    while (true) {
        const int c = in.peek();
        if (c == EOF) throw IoError(std::string("image: truncated header near ") + what);
        if (std::isspace(c)) {
            in.get();
            continue;
        }
        if (c == '#') {
            std::string comment;
            std::getline(in, comment);
            continue;
        }
        in >> token;
        if (!in) throw IoError(std::string("image: malformed header near ") + what);
        return token;
    }
}

int parse_dim(const std::string& token, const char* what) {
    try {
        const int v = std::stoi(token);
        if (v < 1 || v > 1 << 20) throw IoError(std::string("image: implausible ") + what);
        return v;
    } catch (const IoError&) {
        throw;
    } catch (const std::exception&) {
        throw IoError(std::string("image: malformed ") + what);
    }
}

void write_pfm_payload(std::ofstream& out, const char* magic, int width, int height,
                       const std::vector<float>& pixels) {
    out << magic << "\n" << width << " " << height << "\n" << "-1.0" << "\n";
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size() * sizeof(float)));
}

std::vector<float> read_pfm_payload(std::ifstream& in, const char* expected_magic, int& width,
                                    int& height, int channels) {
    const std::string magic = next_token(in, "magic");
    if (magic != expected_magic) throw IoError("pfm: unexpected magic '" + magic + "'");
    width = parse_dim(next_token(in, "width"), "width");
    height = parse_dim(next_token(in, "height"), "height");
    const std::string scale_str = next_token(in, "scale");
    double scale = 0.0;
    try {
        scale = std::stod(scale_str);
    } catch (const std::exception&) {
        throw IoError("pfm: malformed scale");
    }
    if (scale >= 0.0) throw IoError("pfm: only little-endian (negative scale) is supported");
    in.get(); // single whitespace after the scale line
    std::vector<float> pixels(static_cast<std::size_t>(width) * height * channels);
    in.read(reinterpret_cast<char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(pixels.size() * sizeof(float))) {
        throw IoError("pfm: truncated pixel data");
    }
    return pixels;
}

} // namespace

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("ppm: cannot open for writing: " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> bytes(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(img.data[i], 0.0, 1.0) * 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("ppm: write failed: " + path);
}

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("ppm: cannot open: " + path);
    if (next_token(in, "magic") != "P6") throw IoError("ppm: only P6 is supported");
    const int width = parse_dim(next_token(in, "width"), "width");
    const int height = parse_dim(next_token(in, "height"), "height");
    if (next_token(in, "maxval") != "255") throw IoError("ppm: only maxval 255 is supported");
    in.get(); // single whitespace before payload
    std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw IoError("ppm: truncated pixels");
    Image img(width, height);
    for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
    return img;
}

void write_pfm(const std::string& path, const ScalarMap& map) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("pfm: cannot open for writing: " + path);
    std::vector<float> pixels(map.data.size());
    // PFM stores rows bottom to top.
    for (int y = 0; y < map.height; ++y) {
        const int src_y = map.height - 1 - y;
        for (int x = 0; x < map.width; ++x) {
            pixels[static_cast<std::size_t>(y) * map.width + x] = static_cast<float>(map.at(x, src_y));
        }
    }
    write_pfm_payload(out, "Pf", map.width, map.height, pixels);
    if (!out) throw IoError("pfm: write failed: " + path);
}

ScalarMap read_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("pfm: cannot open: " + path);
    int width = 0, height = 0;
    const std::vector<float> pixels = read_pfm_payload(in, "Pf", width, height, 1);
    ScalarMap map(width, height);
    for (int y = 0; y < height; ++y) {
        const int src_y = height - 1 - y;
        for (int x = 0; x < width; ++x) {
            map.at(x, y) = pixels[static_cast<std::size_t>(src_y) * width + x];
        }
    }
    return map;
}

void write_pfm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("pfm: cannot open for writing: " + path);
    std::vector<float> pixels(img.data.size());
    for (int y = 0; y < img.height; ++y) {
        const int src_y = img.height - 1 - y;
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                pixels[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] =
                    static_cast<float>(img.at(x, src_y, c));
            }
        }
    }
    write_pfm_payload(out, "PF", img.width, img.height, pixels);
    if (!out) throw IoError("pfm: write failed: " + path);
}

Image read_pfm_rgb(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("pfm: cannot open: " + path);
    int width = 0, height = 0;
    const std::vector<float> pixels = read_pfm_payload(in, "PF", width, height, 3);
    Image img(width, height);
    for (int y = 0; y < height; ++y) {
        const int src_y = height - 1 - y;
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(x, y, c) = pixels[(static_cast<std::size_t>(src_y) * width + x) * 3 + c];
            }
        }
    }
    return img;
}

} // namespace vxs
