// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "vxs/common.hpp"

namespace vxs {

struct GradReport {
    std::string group;
    double max_rel_err = 0.0;
    double frac_ok = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Analytic rasterizer backward vs central finite differences (h = 1e-4) on a
/// random 5-Gaussian 8x8 scene; passes when >= 99% of raw coordinates agree
/// within 1e-3 relative error. inject_flip flips one analytic sign so the
/// check must fail (mutation probe).
GradReport gradcheck_rasterizer(std::uint64_t seed, bool inject_flip = false);

/// InfoNCE, triplet and stage-2 gradients vs finite differences (h = 1e-5,
/// relative tolerance 1e-4) on random batches.
std::vector<GradReport> gradcheck_alignment(std::uint64_t seed);

/// Reference noise predictor parameter gradients vs finite differences on a
/// 4^3 grid (h = 1e-4, relative tolerance 1e-3, all parameters).
GradReport gradcheck_predictor(std::uint64_t seed);

} // namespace vxs
