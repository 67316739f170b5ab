#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ctb/dataset.hpp"

namespace ctb {

struct IouSchedule {
    std::vector<double> thresholds;  // strictly increasing, each in (0, 1]

    static IouSchedule single(double threshold) { return IouSchedule{{threshold}}; }
    // IoU = 0.5:0.05:0.95
    static IouSchedule coco();
};

// Raw counters and derived values for one IoU threshold.
struct ThresholdMetrics {
    double threshold{};
    std::uint64_t la_tp{}, la_n{};
    std::uint64_t ga_tp{}, ga_n{};
    std::array<std::uint64_t, 5> lc_match{};  // n-gram orders 1..5
    std::array<std::uint64_t, 5> lc_cand{};
    double la{}, lc{}, ga{};
};

struct MetricReport {
    std::vector<ThresholdMetrics> per_threshold;
    double mean_la{}, mean_lc{}, mean_ga{};
};

/// Dataset-level micro-averaged metrics: per threshold the matchings are
/// rebuilt, counts are summed over all images, and the three metrics are
/// derived from the summed counts. Images missing from the prediction set
/// count as empty predictions; prediction images absent from the ground
/// truth raise ValidationError.
MetricReport evaluate(const Dataset& gt, const PredictionSet& pred, const IouSchedule& schedule);

// One labelled section per (name, report) pair; metric values with 4
// decimals, raw counts per threshold.
std::string format_report(
    const std::vector<std::pair<std::string, MetricReport>>& preset_reports);

}  // namespace ctb
