#pragma once

#include <cstddef>
#include <vector>

namespace ctb {

struct Point {
    double x{};
    double y{};

    bool operator==(const Point&) const = default;
};

// Simple closed ring, k >= 3 vertices, positive area.
struct Polygon {
    std::vector<Point> vertices;

    bool operator==(const Polygon&) const = default;
};

struct Rect {
    double x1{};
    double y1{};
    double x2{};
    double y2{};

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }

    bool operator==(const Rect&) const = default;
};

struct IouResult {
    double value{};
    bool degenerate{};  // set when either polygon has zero area
};

struct MatchPair {
    std::size_t det_id{};
    std::size_t gt_id{};
    double iou{};
};

struct Matching {
    std::vector<MatchPair> pairs;
    std::vector<std::size_t> unmatched_detections;
    std::vector<std::size_t> unmatched_gt;
};

// Tightest axis-aligned rectangle containing all vertices.
Rect polygon_bounds(const Polygon& poly);

// Absolute shoelace area.
double polygon_area(const Polygon& poly);

// True when the polygon is a 4-vertex axis-aligned rectangle (any vertex
// order that forms a proper ring).
bool polygon_is_rect(const Polygon& poly);

Polygon rect_polygon(const Rect& r);

// Even-odd point containment test (ray casting).
bool point_in_polygon(const Polygon& poly, double px, double py);

double rect_iou(const Rect& a, const Rect& b);

/// Intersection-over-union of two simple polygons.
///
/// Axis-aligned rectangles take an exact analytic path. Everything else is
/// rasterized with the even-odd rule on a grid whose longer side spans at
/// least 1024 cells of the union bounding box, so the result is deterministic
/// and symmetric in (a, b). Zero-area inputs yield value 0 with the
/// degenerate flag set.
IouResult iou_detailed(const Polygon& a, const Polygon& b);
double iou(const Polygon& a, const Polygon& b);

// Pairwise IoU values, [det][gt].
std::vector<std::vector<double>> iou_matrix(const std::vector<Polygon>& dets,
                                            const std::vector<Polygon>& gts);

// Greedy one-to-one matching over a precomputed IoU matrix: candidate pairs
// with iou >= threshold taken in descending-iou order, ties broken by lower
// gt_id then lower det_id. n_gt is passed explicitly so empty detection sets
// still report every ground-truth id as unmatched.
Matching match_from_matrix(const std::vector<std::vector<double>>& matrix, std::size_t n_gt,
                           double threshold);

Matching match_detections(const std::vector<Polygon>& dets, const std::vector<Polygon>& gts,
                          double threshold);

}  // namespace ctb
