// SPDX-License-Identifier: Apache-2.0
#include "vxs/io/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace vxs {
namespace {

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("checkpoint: truncated file");
}

} // namespace

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot open for writing: " + path);
    out.write("CKP1", 4);
    write_pod(out, static_cast<std::uint32_t>(checkpoint.size()));
    for (const auto& [name, array] : checkpoint) {
        write_pod(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(out, static_cast<std::uint32_t>(array.shape.size()));
        std::uint64_t total = 1;
        for (std::uint64_t d : array.shape) {
            write_pod(out, d);
            total *= d;
        }
        if (total != array.data.size()) {
            throw InvalidParameter("checkpoint: shape does not match data size for " + name);
        }
        out.write(reinterpret_cast<const char*>(array.data.data()),
                  static_cast<std::streamsize>(array.data.size() * sizeof(double)));
    }
    if (!out) throw IoError("checkpoint: write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CKP1", 4) != 0) throw IoError("checkpoint: bad magic");
    std::uint32_t count = 0;
    read_pod(in, count);
    if (count > 1 << 20) throw IoError("checkpoint: implausible entry count");
    Checkpoint checkpoint;
    for (std::uint32_t e = 0; e < count; ++e) {
        std::uint32_t name_len = 0;
        read_pod(in, name_len);
        if (name_len == 0 || name_len > 4096) throw IoError("checkpoint: implausible name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw IoError("checkpoint: truncated name");
        std::uint32_t ndim = 0;
        read_pod(in, ndim);
        if (ndim > 8) throw IoError("checkpoint: implausible rank");
        CheckpointArray array;
        std::uint64_t total = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            std::uint64_t dim = 0;
            read_pod(in, dim);
            if (dim == 0 || dim > 1ull << 32) throw IoError("checkpoint: implausible dimension");
            array.shape.push_back(dim);
            total *= dim;
        }
        if (total > 1ull << 28) throw IoError("checkpoint: implausible array size");
        array.data.resize(total);
        in.read(reinterpret_cast<char*>(array.data.data()),
                static_cast<std::streamsize>(total * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(total * sizeof(double))) {
            throw IoError("checkpoint: truncated array data");
        }
        checkpoint.emplace(std::move(name), std::move(array));
    }
    return checkpoint;
}

} // namespace vxs
