#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ctb/dataset.hpp"
#include "ctb/geometry.hpp"

namespace ctb {

struct BaselineConfig {
    double bandwidth_factor = 1.5;   // times the median box diagonal
    double convergence_eps = 1e-4;   // times the extent diagonal of the input
    int max_iterations = 100;
    double line_overlap = 0.5;       // vertical-overlap ratio for same-line test
};

/// Flat-kernel mean shift over box center points. Converged modes within
/// bandwidth/2 of each other are merged transitively; groups are returned as
/// index lists ordered by their smallest member. A point that exhausts
/// max_iterations keeps its last iterate; when `converged` is given it is
/// set to false in that case.
std::vector<std::vector<std::size_t>> mean_shift_group(const std::vector<Rect>& units,
                                                       const BaselineConfig& cfg,
                                                       bool* converged = nullptr);

/// Left-to-right, top-to-down orderering: units sharing sufficient vertical
/// overlap form a line (transitively), lines sort by mean center-y, units
/// within a line by x1, ties by index. Returns a permutation of indices.
std::vector<std::size_t> reading_order_sort(const std::vector<Rect>& units,
                                            const BaselineConfig& cfg);

// mean_shift_group then reading_order_sort within each group; blocks are
// unit-id sequences ordered by their smallest unit id.
std::vector<std::vector<std::string>> baseline_predict(const std::vector<IntegralUnit>& units,
                                                       const BaselineConfig& cfg);

}  // namespace ctb
