// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <vector>

namespace vxs {

/// Exact minimum-cost linear assignment (Jonker-Volgenant shortest augmenting
/// paths) on a dense square cost matrix. Returns row -> column.
std::vector<int> solve_assignment_exact(const Eigen::MatrixXd& cost);

/// Nearest-unused-column baseline, rows in index order. Always feasible.
std::vector<int> greedy_assignment(const std::vector<Eigen::Vector3d>& positions,
                                   const std::vector<Eigen::Vector3d>& centers);

/// Epsilon-scaled forward auction on implicit squared-distance costs; final
/// epsilon is sized so the result is within ~1% of optimal.
std::vector<int> auction_assignment(const std::vector<Eigen::Vector3d>& positions,
                                    const std::vector<Eigen::Vector3d>& centers);

double assignment_cost(const std::vector<Eigen::Vector3d>& positions,
                       const std::vector<Eigen::Vector3d>& centers, const std::vector<int>& perm);

} // namespace vxs
