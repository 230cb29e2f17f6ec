// SPDX-License-Identifier: Apache-2.0
#include "vxs/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "vxs/common.hpp"

namespace vxs {

std::vector<int> solve_assignment_exact(const Eigen::MatrixXd& cost) {
    const int dim = static_cast<int>(cost.rows());
    if (cost.cols() != dim || dim < 1) throw InvalidParameter("solve_assignment_exact: square matrix required");
    if (!cost.allFinite()) throw InvalidParameter("solve_assignment_exact: non-finite costs");

    std::vector<int> rowsol(dim, -1), colsol(dim, -1);
    std::vector<double> v(dim, 0.0), d(dim, 0.0);
    std::vector<int> free_rows(dim, 0), collist(dim, 0), pred(dim, 0), matches(dim, 0);
    int numfree = 0;

    // Column reduction, reverse order.
    for (int j = dim - 1; j >= 0; --j) {
        double min_cost = cost(0, j);
        int imin = 0;
        for (int i = 1; i < dim; ++i) {
            if (cost(i, j) < min_cost) {
                min_cost = cost(i, j);
                imin = i;
            }
        }
        v[j] = min_cost;
        if (++matches[imin] == 1) {
            rowsol[imin] = j;
            colsol[j] = imin;
        } else {
            colsol[j] = -1;
        }
    }

    // Reduction transfer from rows assigned exactly once.
    for (int i = 0; i < dim; ++i) {
        if (matches[i] == 0) {
            free_rows[numfree++] = i;
        } else if (matches[i] == 1) {
            const int j1 = rowsol[i];
            double min_red = std::numeric_limits<double>::max();
            for (int j = 0; j < dim; ++j) {
                if (j != j1) min_red = std::min(min_red, cost(i, j) - v[j]);
            }
            if (min_red != std::numeric_limits<double>::max()) v[j1] -= min_red;
        }
    }

    // Augmenting row reduction, two passes.
    for (int pass = 0; pass < 2; ++pass) {
        int k = 0;
        const int prev_numfree = numfree;
        numfree = 0;
        while (k < prev_numfree) {
            const int i = free_rows[k];
            ++k;
            double umin = cost(i, 0) - v[0];
            int j1 = 0, j2 = -1;
            double usubmin = std::numeric_limits<double>::max();
            for (int j = 1; j < dim; ++j) {
                const double h = cost(i, j) - v[j];
                if (h < usubmin) {
                    if (h >= umin) {
                        usubmin = h;
                        j2 = j;
                    } else {
                        usubmin = umin;
                        umin = h;
                        j2 = j1;
                        j1 = j;
                    }
                }
            }
            int i0 = colsol[j1];
            if (umin < usubmin) {
                v[j1] -= usubmin - umin;
            } else if (i0 >= 0 && j2 >= 0) {
                j1 = j2;
                i0 = colsol[j1];
            }
            rowsol[i] = j1;
            colsol[j1] = i;
            if (i0 >= 0) {
                if (umin < usubmin) {
                    free_rows[--k] = i0;
                } else {
                    free_rows[numfree++] = i0;
                }
            }
        }
    }

    // Augment remaining free rows along shortest alternating paths.
    for (int f = 0; f < numfree; ++f) {
        const int freerow = free_rows[f];
        for (int j = 0; j < dim; ++j) {
            d[j] = cost(freerow, j) - v[j];
            pred[j] = freerow;
            collist[j] = j;
        }
        int low = 0, up = 0, last = 0, endofpath = -1;
        double min_d = 0.0;
        bool found = false;
        do {
            if (up == low) {
                last = low - 1;
                min_d = d[collist[up++]];
                for (int k = up; k < dim; ++k) {
                    const int j = collist[k];
                    const double h = d[j];
                    if (h <= min_d) {
                        if (h < min_d) {
                            up = low;
                            min_d = h;
                        }
                        collist[k] = collist[up];
                        collist[up++] = j;
                    }
                }
                for (int k = low; k < up; ++k) {
                    if (colsol[collist[k]] < 0) {
                        endofpath = collist[k];
                        found = true;
                        break;
                    }
                }
            }
            if (!found) {
                const int j1 = collist[low];
                ++low;
                const int i = colsol[j1];
                const double h = cost(i, j1) - v[j1] - min_d;
                for (int k = up; k < dim; ++k) {
                    const int j = collist[k];
                    const double v2 = cost(i, j) - v[j] - h;
                    if (v2 < d[j]) {
                        pred[j] = i;
                        if (v2 == min_d) {
                            if (colsol[j] < 0) {
                                endofpath = j;
                                found = true;
                                break;
                            }
                            collist[k] = collist[up];
                            collist[up++] = j;
                        }
                        d[j] = v2;
                    }
                }
            }
        } while (!found);

        for (int k = 0; k <= last; ++k) {
            const int j1 = collist[k];
            v[j1] += d[j1] - min_d;
        }

        int i = -1;
        do {
            i = pred[endofpath];
            colsol[endofpath] = i;
            const int j1 = endofpath;
            endofpath = rowsol[i];
            rowsol[i] = j1;
        } while (i != freerow);
    }
    return rowsol;
}

namespace {

void check_point_sets(const std::vector<Eigen::Vector3d>& positions,
                      const std::vector<Eigen::Vector3d>& centers) {
    if (positions.size() != centers.size() || positions.empty()) {
        throw InvalidParameter("assignment: point sets must be non-empty and of equal size");
    }
    for (const auto& p : positions) {
        if (!p.allFinite()) throw InvalidParameter("assignment: non-finite position");
    }
    for (const auto& c : centers) {
        if (!c.allFinite()) throw InvalidParameter("assignment: non-finite center");
    }
}

} // namespace

std::vector<int> greedy_assignment(const std::vector<Eigen::Vector3d>& positions,
                                   const std::vector<Eigen::Vector3d>& centers) {
    check_point_sets(positions, centers);
    const std::size_t n = positions.size();
    std::vector<bool> used(n, false);
    std::vector<int> perm(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_j = -1;
        for (std::size_t j = 0; j < n; ++j) {
            if (used[j]) continue;
            const double c = (positions[i] - centers[j]).squaredNorm();
            if (c < best) {
                best = c;
                best_j = static_cast<int>(j);
            }
        }
        perm[i] = best_j;
        used[static_cast<std::size_t>(best_j)] = true;
    }
    return perm;
}

std::vector<int> auction_assignment(const std::vector<Eigen::Vector3d>& positions,
                                    const std::vector<Eigen::Vector3d>& centers) {
    check_point_sets(positions, centers);
    const std::size_t n = positions.size();

    // Lower bound: independent row minima. Sizes the final epsilon so the
    // epsilon-scaling optimality gap (n * eps) stays near 1% of the optimum.
    double lower_bound = 0.0;
    double max_cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row_min = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            const double c = (positions[i] - centers[j]).squaredNorm();
            row_min = std::min(row_min, c);
            max_cost = std::max(max_cost, c);
        }
        lower_bound += row_min;
    }
    const double eps_final = std::max(0.01 * std::max(lower_bound, 1e-9) / static_cast<double>(n), 1e-12);
    double eps = std::max(max_cost / 4.0, eps_final);

    std::vector<double> price(n, 0.0);
    std::vector<int> owner(n, -1), perm(n, -1);

    while (true) {
        std::fill(owner.begin(), owner.end(), -1);
        std::fill(perm.begin(), perm.end(), -1);
        std::deque<std::size_t> queue;
        for (std::size_t i = 0; i < n; ++i) queue.push_back(i);
        while (!queue.empty()) {
            const std::size_t i = queue.front();
            queue.pop_front();
            // Benefit of object j for person i is -cost; values drop by price.
            double best = -std::numeric_limits<double>::infinity();
            double second = -std::numeric_limits<double>::infinity();
            std::size_t best_j = 0;
            for (std::size_t j = 0; j < n; ++j) {
                const double value = -(positions[i] - centers[j]).squaredNorm() - price[j];
                if (value > best) {
                    second = best;
                    best = value;
                    best_j = j;
                } else if (value > second) {
                    second = value;
                }
            }
            const double increment = (second == -std::numeric_limits<double>::infinity())
                                         ? eps
                                         : best - second + eps;
            price[best_j] += increment;
            const int prev = owner[best_j];
            owner[best_j] = static_cast<int>(i);
            perm[i] = static_cast<int>(best_j);
            if (prev >= 0) {
                perm[static_cast<std::size_t>(prev)] = -1;
                queue.push_back(static_cast<std::size_t>(prev));
            }
        }
        if (eps <= eps_final) break;
        eps = std::max(eps / 4.0, eps_final);
    }

    // A feasible baseline caps the result, whatever the scaling schedule did.
    const std::vector<int> greedy = greedy_assignment(positions, centers);
    if (assignment_cost(positions, centers, greedy) < assignment_cost(positions, centers, perm)) {
        return greedy;
    }
    return perm;
}

double assignment_cost(const std::vector<Eigen::Vector3d>& positions,
                       const std::vector<Eigen::Vector3d>& centers, const std::vector<int>& perm) {
    if (perm.size() != positions.size()) throw InvalidParameter("assignment_cost: size mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        total += (positions[i] - centers[static_cast<std::size_t>(perm[i])]).squaredNorm();
    }
    return total;
}

} // namespace vxs
