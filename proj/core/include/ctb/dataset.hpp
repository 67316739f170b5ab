#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctb/geometry.hpp"

namespace ctb {

struct IntegralUnit {
    std::string unit_id;
    Polygon polygon;
    std::optional<std::string> text;
    std::optional<double> score;  // prediction files only

    bool operator==(const IntegralUnit&) const = default;
};

// Ordered unit references; array order is reading order.
struct ContextualBlock {
    std::string block_id;
    std::vector<std::string> units;

    bool operator==(const ContextualBlock&) const = default;
};

struct ImageAnnotation {
    std::string image_id;
    std::int64_t width{};
    std::int64_t height{};
    std::vector<IntegralUnit> units;
    std::vector<ContextualBlock> blocks;

    bool operator==(const ImageAnnotation&) const = default;
};

enum class Granularity { character, word };

struct Dataset {
    std::vector<ImageAnnotation> images;
    Granularity granularity = Granularity::word;

    bool operator==(const Dataset&) const = default;
};

// Same shape as the ground truth; per-unit scores allowed, blocks must
// partition the detected units.
struct PredictionSet {
    std::vector<ImageAnnotation> images;

    bool operator==(const PredictionSet&) const = default;
};

struct Violation {
    std::string image_id;  // empty for dataset-level violations
    std::string field;
    std::string message;
};

struct DatasetStats {
    std::uint64_t n_integral{};
    std::uint64_t n_block{};
    std::uint64_t n_image{};
    double integral_per_block{};
    double integral_per_image{};
    double block_per_image{};
};

/// Parse the ground-truth annotation document. With validated=true (the
/// default) every documented invariant is enforced and the first violation
/// raises ValidationError naming image_id and field; validated=false stops
/// after the schema so callers can list violations themselves.
Dataset parse_ground_truth(std::string_view bytes, bool validated = true);

PredictionSet parse_predictions(std::string_view bytes);

// Units-only variant for detector output: blocks are optional and ignored.
std::vector<ImageAnnotation> parse_detections(std::string_view bytes);

std::string serialize_ground_truth(const Dataset& d);
std::string serialize_predictions(const PredictionSet& p);

std::vector<Violation> validate_images(const std::vector<ImageAnnotation>& images,
                                       bool require_partition);
std::vector<Violation> validate_dataset(const Dataset& d);

DatasetStats stats_from_counts(std::uint64_t n_integral, std::uint64_t n_block,
                               std::uint64_t n_image);
DatasetStats compute_stats(const Dataset& d);

// Counts and 2-decimal averages, one "key: value" line each.
std::string format_stats(const DatasetStats& s);

}  // namespace ctb
