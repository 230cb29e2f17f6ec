// SPDX-License-Identifier: Apache-2.0
#include "vxs/io/embedding.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace vxs {

std::vector<EmbeddingRecord> read_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("embeddings: cannot open: " + path);
    std::vector<EmbeddingRecord> records;
    std::string line;
    int line_no = 0;
    Eigen::Index dim = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        EmbeddingRecord rec;
        std::string tag;
        if (!std::getline(ls, rec.id, '\t') || !std::getline(ls, tag, '\t') || tag.size() != 1) {
            throw IoError("embeddings: line " + std::to_string(line_no) + ": expected id, tag, values");
        }
        try {
            rec.modality = modality_from_tag(tag[0]);
        } catch (const InvalidParameter& e) {
            throw IoError("embeddings: line " + std::to_string(line_no) + ": " + e.what());
        }
        std::vector<double> values;
        std::string field;
        while (std::getline(ls, field, '\t')) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(field, &used));
                if (used != field.size()) throw std::invalid_argument("trailing junk");
            } catch (const std::exception&) {
                throw IoError("embeddings: line " + std::to_string(line_no) + ": malformed float '" +
                              field + "'");
            }
        }
        if (values.empty()) {
            throw IoError("embeddings: line " + std::to_string(line_no) + ": no values");
        }
        if (dim < 0) dim = static_cast<Eigen::Index>(values.size());
        if (static_cast<Eigen::Index>(values.size()) != dim) {
            throw IoError("embeddings: line " + std::to_string(line_no) + ": inconsistent dimension");
        }
        rec.values = Eigen::Map<Eigen::VectorXd>(values.data(), dim);
        const double norm = rec.values.norm();
        if (std::abs(norm - 1.0) > 1e-6) {
            throw IoError("embeddings: line " + std::to_string(line_no) +
                          ": row is not unit-normalized (|v| = " + std::to_string(norm) + ")");
        }
        records.push_back(std::move(rec));
    }
    if (records.empty()) throw IoError("embeddings: no records in " + path);
    return records;
}

void write_embeddings(const std::string& path, const std::vector<EmbeddingRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("embeddings: cannot open for writing: " + path);
    out.precision(std::numeric_limits<double>::max_digits10);
    for (const EmbeddingRecord& rec : records) {
        out << rec.id << '\t' << modality_tag(rec.modality);
        for (Eigen::Index i = 0; i < rec.values.size(); ++i) out << '\t' << rec.values[i];
        out << '\n';
    }
    if (!out) throw IoError("embeddings: write failed: " + path);
}

std::map<Modality, EmbeddingBatch> embeddings_to_batches(const std::vector<EmbeddingRecord>& records) {
    std::map<Modality, std::vector<const EmbeddingRecord*>> groups;
    for (const EmbeddingRecord& rec : records) groups[rec.modality].push_back(&rec);
    std::map<Modality, EmbeddingBatch> batches;
    for (const auto& [modality, rows] : groups) {
        Eigen::MatrixXd raw(static_cast<Eigen::Index>(rows.size()), rows.front()->values.size());
        for (std::size_t i = 0; i < rows.size(); ++i) raw.row(static_cast<Eigen::Index>(i)) = rows[i]->values;
        batches.emplace(modality, EmbeddingBatch::from_raw(std::move(raw), modality));
    }
    return batches;
}

} // namespace vxs
