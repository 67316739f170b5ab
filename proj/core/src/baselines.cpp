#include "ctb/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "ctb/union_find.hpp"

namespace ctb {

namespace {

struct Center {
    double x{}, y{};
};

double median(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double dist(const Center& a, const Center& b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

std::vector<std::vector<std::size_t>> mean_shift_group(const std::vector<Rect>& units,
                                                       const BaselineConfig& cfg,
                                                       bool* converged) {
    if (units.empty()) throw std::invalid_argument("mean_shift_group requires at least one unit");
    if (converged) *converged = true;

    std::vector<Center> centers(units.size());
    std::vector<double> diagonals(units.size());
    double minx = units[0].x1, miny = units[0].y1, maxx = units[0].x2, maxy = units[0].y2;
    for (std::size_t i = 0; i < units.size(); ++i) {
        centers[i] = Center{0.5 * (units[i].x1 + units[i].x2), 0.5 * (units[i].y1 + units[i].y2)};
        diagonals[i] = std::hypot(units[i].width(), units[i].height());
        minx = std::min(minx, units[i].x1);
        miny = std::min(miny, units[i].y1);
        maxx = std::max(maxx, units[i].x2);
        maxy = std::max(maxy, units[i].y2);
    }
    const double bandwidth = cfg.bandwidth_factor * median(diagonals);
    const double extent = std::hypot(maxx - minx, maxy - miny);
    const double eps = cfg.convergence_eps * (extent > 0.0 ? extent : 1.0);

    // Each center ascends to its mode; non-convergence falls back to the
    // last iterate.
    std::vector<Center> modes(centers.size());
    for (std::size_t i = 0; i < centers.size(); ++i) {
        Center m = centers[i];
        bool settled = false;
        for (int iter = 0; iter < cfg.max_iterations && !settled; ++iter) {
            double sx = 0.0, sy = 0.0;
            std::size_t count = 0;
            for (const Center& c : centers) {
                if (dist(m, c) <= bandwidth) {
                    sx += c.x;
                    sy += c.y;
                    ++count;
                }
            }
            const Center next{sx / static_cast<double>(count), sy / static_cast<double>(count)};
            settled = dist(m, next) <= eps;
            m = next;
        }
        if (!settled && converged) *converged = false;
        modes[i] = m;
    }

    UnionFind uf(modes.size());
    for (std::size_t i = 0; i < modes.size(); ++i) {
        for (std::size_t j = i + 1; j < modes.size(); ++j) {
            if (dist(modes[i], modes[j]) <= bandwidth / 2.0) uf.unite(i, j);
        }
    }

    std::map<std::size_t, std::vector<std::size_t>> by_root;
    for (std::size_t i = 0; i < modes.size(); ++i) by_root[uf.find(i)].push_back(i);
    std::vector<std::vector<std::size_t>> groups;
    for (auto& [root, members] : by_root) groups.push_back(std::move(members));
    std::sort(groups.begin(), groups.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return groups;
}

std::vector<std::size_t> reading_order_sort(const std::vector<Rect>& units,
                                            const BaselineConfig& cfg) {
    if (units.empty()) throw std::invalid_argument("reading_order_sort requires at least one unit");

    // Same-line test, chained transitively into lines.
    UnionFind uf(units.size());
    for (std::size_t i = 0; i < units.size(); ++i) {
        for (std::size_t j = i + 1; j < units.size(); ++j) {
            const double overlap =
                std::min(units[i].y2, units[j].y2) - std::max(units[i].y1, units[j].y1);
            const double min_h = std::min(units[i].height(), units[j].height());
            if (overlap >= 0.0 && overlap >= cfg.line_overlap * min_h) uf.unite(i, j);
        }
    }

    std::map<std::size_t, std::vector<std::size_t>> lines;
    for (std::size_t i = 0; i < units.size(); ++i) lines[uf.find(i)].push_back(i);

    struct Line {
        double mean_y{};
        std::vector<std::size_t> members;
    };
    std::vector<Line> ordered;
    for (auto& [root, members] : lines) {
        Line line;
        for (std::size_t i : members) line.mean_y += 0.5 * (units[i].y1 + units[i].y2);
        line.mean_y /= static_cast<double>(members.size());
        std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            if (units[a].x1 != units[b].x1) return units[a].x1 < units[b].x1;
            return a < b;
        });
        line.members = std::move(members);
        ordered.push_back(std::move(line));
    }
    std::sort(ordered.begin(), ordered.end(), [](const Line& a, const Line& b) {
        if (a.mean_y != b.mean_y) return a.mean_y < b.mean_y;
        return a.members.front() < b.members.front();
    });

    std::vector<std::size_t> out;
    out.reserve(units.size());
    for (const Line& line : ordered) {
        out.insert(out.end(), line.members.begin(), line.members.end());
    }
    return out;
}

std::vector<std::vector<std::string>> baseline_predict(const std::vector<IntegralUnit>& units,
                                                       const BaselineConfig& cfg) {
    if (units.empty()) return {};

    // Stable processing order regardless of input order.
    std::vector<std::size_t> idx(units.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return units[a].unit_id < units[b].unit_id;
    });

    std::vector<Rect> rects;
    rects.reserve(units.size());
    for (std::size_t i : idx) rects.push_back(polygon_bounds(units[i].polygon));

    std::vector<std::vector<std::string>> blocks;
    for (const auto& group : mean_shift_group(rects, cfg)) {
        std::vector<Rect> group_rects;
        group_rects.reserve(group.size());
        for (std::size_t g : group) group_rects.push_back(rects[g]);
        std::vector<std::string> block;
        for (std::size_t pos : reading_order_sort(group_rects, cfg)) {
            block.push_back(units[idx[group[pos]]].unit_id);
        }
        blocks.push_back(std::move(block));
    }
    // mean_shift_group already orders by smallest member, which is the
    // smallest unit id after the sort above.
    return blocks;
}

}  // namespace ctb
