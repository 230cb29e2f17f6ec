// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "vxs/alignment.hpp"

namespace vxs {

struct EmbeddingRecord {
    std::string id;
    Modality modality = Modality::Point;
    Eigen::VectorXd values;
};

/// TSV rows: id <tab> modality tag <tab> D floats. Rows must be unit-norm
/// within 1e-6 and share a common dimension.
std::vector<EmbeddingRecord> read_embeddings(const std::string& path);
void write_embeddings(const std::string& path, const std::vector<EmbeddingRecord>& records);

/// Groups records by modality (file order preserved within each modality).
std::map<Modality, EmbeddingBatch> embeddings_to_batches(const std::vector<EmbeddingRecord>& records);

} // namespace vxs
