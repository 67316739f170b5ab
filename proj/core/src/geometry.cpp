#include "ctb/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ctb {

namespace {

constexpr std::size_t kRasterLongSide = 1024;

Rect union_bounds(const Rect& a, const Rect& b) {
    return Rect{std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
                std::max(a.y2, b.y2)};
}

}  // namespace

Rect polygon_bounds(const Polygon& poly) {
    if (poly.vertices.empty()) throw std::invalid_argument("polygon_bounds: empty polygon");

    double minx = poly.vertices[0].x, maxx = poly.vertices[0].x;
    double miny = poly.vertices[0].y, maxy = poly.vertices[0].y;
    for (const Point& p : poly.vertices) {
        minx = std::min(minx, p.x);
        maxx = std::max(maxx, p.x);
        miny = std::min(miny, p.y);
        maxy = std::max(maxy, p.y);
    }
    return Rect{minx, miny, maxx, maxy};
}

double polygon_area(const Polygon& poly) {
    const auto& v = poly.vertices;
    if (v.size() < 3) return 0.0;

    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Point& p = v[i];
        const Point& q = v[(i + 1) % v.size()];
        acc += p.x * q.y - q.x * p.y;
    }
    return std::fabs(acc) * 0.5;
}

bool polygon_is_rect(const Polygon& poly) {
    const auto& v = poly.vertices;
    if (v.size() != 4) return false;

    // Every edge axis-parallel and non-degenerate.
    for (std::size_t i = 0; i < 4; ++i) {
        const Point& p = v[i];
        const Point& q = v[(i + 1) % 4];
        const bool horizontal = p.y == q.y && p.x != q.x;
        const bool vertical = p.x == q.x && p.y != q.y;
        if (!horizontal && !vertical) return false;
    }

    // Vertices must be exactly the four corners of the bounds.
    const Rect b = polygon_bounds(poly);
    bool seen[4] = {false, false, false, false};
    const Point corners[4] = {{b.x1, b.y1}, {b.x2, b.y1}, {b.x2, b.y2}, {b.x1, b.y2}};
    for (const Point& p : v) {
        bool hit = false;
        for (int c = 0; c < 4; ++c) {
            if (!seen[c] && p == corners[c]) {
                seen[c] = true;
                hit = true;
                break;
            }
        }
        if (!hit) return false;
    }
    return seen[0] && seen[1] && seen[2] && seen[3];
}

Polygon rect_polygon(const Rect& r) {
    return Polygon{{{r.x1, r.y1}, {r.x2, r.y1}, {r.x2, r.y2}, {r.x1, r.y2}}};
}

bool point_in_polygon(const Polygon& poly, double px, double py) {
    const auto& v = poly.vertices;
    bool inside = false;
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        const Point& a = v[j];
        const Point& b = v[i];
        if ((b.y > py) != (a.y > py)) {
            const double xint = b.x + (py - b.y) * (a.x - b.x) / (a.y - b.y);
            if (px < xint) inside = !inside;
        }
    }
    return inside;
}

double rect_iou(const Rect& a, const Rect& b) {
    const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

IouResult iou_detailed(const Polygon& a, const Polygon& b) {
    const double area_a = polygon_area(a);
    const double area_b = polygon_area(b);
    if (area_a <= 0.0 || area_b <= 0.0) return IouResult{0.0, true};

    if (polygon_is_rect(a) && polygon_is_rect(b)) {
        return IouResult{rect_iou(polygon_bounds(a), polygon_bounds(b)), false};
    }

    // Even-odd rasterization over the union bounding box. The grid derives
    // from the union box alone, so iou(a,b) and iou(b,a) sample identical
    // points and the result is bit-identical under argument swap.
    const Rect ub = union_bounds(polygon_bounds(a), polygon_bounds(b));
    const double w = ub.width();
    const double h = ub.height();
    const double longest = std::max(w, h);
    if (longest <= 0.0) return IouResult{0.0, false};

    const double cell = longest / static_cast<double>(kRasterLongSide);
    const auto nx = static_cast<std::size_t>(std::max(1.0, std::ceil(w / cell)));
    const auto ny = static_cast<std::size_t>(std::max(1.0, std::ceil(h / cell)));

    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t iy = 0; iy < ny; ++iy) {
        const double py = ub.y1 + (static_cast<double>(iy) + 0.5) * cell;
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const double px = ub.x1 + (static_cast<double>(ix) + 0.5) * cell;
            const bool in_a = point_in_polygon(a, px, py);
            const bool in_b = point_in_polygon(b, px, py);
            inter += (in_a && in_b) ? 1 : 0;
            uni += (in_a || in_b) ? 1 : 0;
        }
    }
    if (uni == 0) return IouResult{0.0, false};
    return IouResult{static_cast<double>(inter) / static_cast<double>(uni), false};
}

double iou(const Polygon& a, const Polygon& b) { return iou_detailed(a, b).value; }

std::vector<std::vector<double>> iou_matrix(const std::vector<Polygon>& dets,
                                            const std::vector<Polygon>& gts) {
    std::vector<std::vector<double>> m(dets.size(), std::vector<double>(gts.size(), 0.0));
    for (std::size_t i = 0; i < dets.size(); ++i) {
        for (std::size_t j = 0; j < gts.size(); ++j) {
            m[i][j] = iou_detailed(dets[i], gts[j]).value;
        }
    }
    return m;
}

Matching match_from_matrix(const std::vector<std::vector<double>>& matrix, std::size_t n_gt,
                           double threshold) {
    if (!(threshold > 0.0) || threshold > 1.0) {
        throw std::invalid_argument("match threshold must lie in (0, 1]");
    }

    const std::size_t n_det = matrix.size();

    struct Candidate {
        double iou;
        std::size_t gt_id;
        std::size_t det_id;
    };
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < n_det; ++i) {
        for (std::size_t j = 0; j < matrix[i].size(); ++j) {
            if (matrix[i][j] >= threshold) cands.push_back(Candidate{matrix[i][j], j, i});
        }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.gt_id != b.gt_id) return a.gt_id < b.gt_id;
        return a.det_id < b.det_id;
    });

    Matching out;
    std::vector<bool> det_used(n_det, false);
    std::vector<bool> gt_used(n_gt, false);
    for (const Candidate& c : cands) {
        if (det_used[c.det_id] || gt_used[c.gt_id]) continue;
        det_used[c.det_id] = true;
        gt_used[c.gt_id] = true;
        out.pairs.push_back(MatchPair{c.det_id, c.gt_id, c.iou});
    }
    for (std::size_t i = 0; i < n_det; ++i) {
        if (!det_used[i]) out.unmatched_detections.push_back(i);
    }
    for (std::size_t j = 0; j < n_gt; ++j) {
        if (!gt_used[j]) out.unmatched_gt.push_back(j);
    }
    return out;
}

Matching match_detections(const std::vector<Polygon>& dets, const std::vector<Polygon>& gts,
                          double threshold) {
    return match_from_matrix(iou_matrix(dets, gts), gts.size(), threshold);
}

}  // namespace ctb
