#include "ctb/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ctb/errors.hpp"
#include "ctb/geometry.hpp"

namespace ctb {

namespace {

// Predicted sequences rewritten over matched ground-truth unit indices;
// unmatched detections become unique negative sentinels so they can never
// match an n-gram.
using Sequence = std::vector<long>;

struct ImageView {
    std::vector<Polygon> gt_polys;
    std::vector<Sequence> gt_blocks;     // gt unit indices
    std::vector<Polygon> det_polys;
    std::vector<std::vector<std::size_t>> pred_blocks;  // det indices
};

ImageView make_view(const ImageAnnotation& gt, const ImageAnnotation* pred) {
    ImageView view;
    std::unordered_map<std::string, std::size_t> gt_index;
    for (std::size_t u = 0; u < gt.units.size(); ++u) {
        gt_index[gt.units[u].unit_id] = u;
        view.gt_polys.push_back(gt.units[u].polygon);
    }
    for (const ContextualBlock& b : gt.blocks) {
        Sequence seq;
        for (const std::string& uid : b.units) seq.push_back(static_cast<long>(gt_index.at(uid)));
        view.gt_blocks.push_back(std::move(seq));
    }
    if (pred) {
        std::unordered_map<std::string, std::size_t> det_index;
        for (std::size_t u = 0; u < pred->units.size(); ++u) {
            det_index[pred->units[u].unit_id] = u;
            view.det_polys.push_back(pred->units[u].polygon);
        }
        for (const ContextualBlock& b : pred->blocks) {
            std::vector<std::size_t> seq;
            for (const std::string& uid : b.units) seq.push_back(det_index.at(uid));
            view.pred_blocks.push_back(std::move(seq));
        }
    }
    return view;
}

struct Counts {
    std::uint64_t la_tp{}, la_n{};
    std::uint64_t ga_tp{}, ga_n{};
    std::array<std::uint64_t, 5> lc_match{};
    std::array<std::uint64_t, 5> lc_cand{};
};

void count_image(const ImageView& view, const Matching& matching, Counts& acc) {
    std::vector<long> gt_of_det(view.det_polys.size(), -1);
    std::vector<long> det_of_gt(view.gt_polys.size(), -1);
    for (const MatchPair& p : matching.pairs) {
        gt_of_det[p.det_id] = static_cast<long>(p.gt_id);
        det_of_gt[p.gt_id] = static_cast<long>(p.det_id);
    }

    // Rewrite predicted blocks over gt unit indices.
    std::vector<Sequence> rewritten;
    long sentinel = -2;
    rewritten.reserve(view.pred_blocks.size());
    for (const auto& block : view.pred_blocks) {
        Sequence seq;
        seq.reserve(block.size());
        for (std::size_t det : block) {
            seq.push_back(gt_of_det[det] >= 0 ? gt_of_det[det] : sentinel--);
        }
        rewritten.push_back(std::move(seq));
    }

    // LA: ground-truth adjacent pairs whose successor link is predicted.
    std::set<std::pair<std::size_t, std::size_t>> pred_adjacent;
    for (const auto& block : view.pred_blocks) {
        for (std::size_t i = 0; i + 1 < block.size(); ++i) {
            pred_adjacent.insert({block[i], block[i + 1]});
        }
    }
    for (const Sequence& block : view.gt_blocks) {
        for (std::size_t i = 0; i + 1 < block.size(); ++i) {
            ++acc.la_n;
            const long da = det_of_gt[block[i]];
            const long db = det_of_gt[block[i + 1]];
            if (da >= 0 && db >= 0 &&
                pred_adjacent.count({static_cast<std::size_t>(da), static_cast<std::size_t>(db)})) {
                ++acc.la_tp;
            }
        }
    }

    // GA: exact sequence reproduction, extras break it.
    acc.ga_n += view.gt_blocks.size();
    for (const Sequence& gt_block : view.gt_blocks) {
        for (const Sequence& pred_block : rewritten) {
            if (pred_block == gt_block) {
                ++acc.ga_tp;
                break;
            }
        }
    }

    // LC: clipped n-gram precision counts. n = 1 compares single-unit blocks
    // only; n in [2,5] compares n-grams of consecutive units.
    for (int n = 1; n <= 5; ++n) {
        std::map<Sequence, std::uint64_t> cand, ref;
        if (n == 1) {
            for (const Sequence& block : rewritten) {
                if (block.size() == 1) ++cand[block];
            }
            for (const Sequence& block : view.gt_blocks) {
                if (block.size() == 1) ++ref[block];
            }
        } else {
            for (const Sequence& block : rewritten) {
                for (std::size_t i = 0; i + n <= block.size(); ++i) {
                    ++cand[Sequence(block.begin() + i, block.begin() + i + n)];
                }
            }
            for (const Sequence& block : view.gt_blocks) {
                for (std::size_t i = 0; i + n <= block.size(); ++i) {
                    ++ref[Sequence(block.begin() + i, block.begin() + i + n)];
                }
            }
        }
        for (const auto& [gram, count] : cand) {
            acc.lc_cand[n - 1] += count;
            const auto it = ref.find(gram);
            if (it != ref.end()) acc.lc_match[n - 1] += std::min(count, it->second);
        }
    }
}

double ratio(std::uint64_t tp, std::uint64_t n) {
    return n == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(n);
}

ThresholdMetrics finalize(double threshold, const Counts& c) {
    ThresholdMetrics m;
    m.threshold = threshold;
    m.la_tp = c.la_tp;
    m.la_n = c.la_n;
    m.ga_tp = c.ga_tp;
    m.ga_n = c.ga_n;
    m.lc_match = c.lc_match;
    m.lc_cand = c.lc_cand;
    m.la = ratio(c.la_tp, c.la_n);
    m.ga = ratio(c.ga_tp, c.ga_n);
    double lc_sum = 0.0;
    int lc_terms = 0;
    for (int n = 0; n < 5; ++n) {
        if (c.lc_cand[n] > 0) {
            lc_sum += ratio(c.lc_match[n], c.lc_cand[n]);
            ++lc_terms;
        }
    }
    m.lc = lc_terms == 0 ? 0.0 : lc_sum / lc_terms;
    return m;
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

IouSchedule IouSchedule::coco() {
    IouSchedule s;
    for (int k = 0; k < 10; ++k) s.thresholds.push_back(0.5 + 0.05 * k);
    return s;
}

MetricReport evaluate(const Dataset& gt, const PredictionSet& pred, const IouSchedule& schedule) {
    if (schedule.thresholds.empty()) throw ValidationError("empty IoU schedule");
    for (std::size_t i = 0; i < schedule.thresholds.size(); ++i) {
        const double t = schedule.thresholds[i];
        if (!(t > 0.0) || t > 1.0) throw ValidationError("IoU threshold outside (0, 1]");
        if (i > 0 && t <= schedule.thresholds[i - 1]) {
            throw ValidationError("IoU thresholds must be strictly increasing");
        }
    }

    std::unordered_map<std::string, const ImageAnnotation*> pred_by_id;
    for (const ImageAnnotation& img : pred.images) pred_by_id[img.image_id] = &img;
    {
        std::set<std::string> gt_ids;
        for (const ImageAnnotation& img : gt.images) gt_ids.insert(img.image_id);
        for (const ImageAnnotation& img : pred.images) {
            if (!gt_ids.count(img.image_id)) {
                throw ValidationError("prediction image '" + img.image_id +
                                      "' absent from ground truth");
            }
        }
    }

    std::vector<Counts> acc(schedule.thresholds.size());
    for (const ImageAnnotation& gt_img : gt.images) {
        const auto it = pred_by_id.find(gt_img.image_id);
        const ImageView view = make_view(gt_img, it == pred_by_id.end() ? nullptr : it->second);
        const auto matrix = iou_matrix(view.det_polys, view.gt_polys);
        for (std::size_t ti = 0; ti < schedule.thresholds.size(); ++ti) {
            const Matching matching =
                match_from_matrix(matrix, view.gt_polys.size(), schedule.thresholds[ti]);
            count_image(view, matching, acc[ti]);
        }
    }

    MetricReport report;
    for (std::size_t ti = 0; ti < schedule.thresholds.size(); ++ti) {
        report.per_threshold.push_back(finalize(schedule.thresholds[ti], acc[ti]));
    }
    const auto n = static_cast<double>(report.per_threshold.size());
    for (const ThresholdMetrics& m : report.per_threshold) {
        report.mean_la += m.la;
        report.mean_lc += m.lc;
        report.mean_ga += m.ga;
    }
    report.mean_la /= n;
    report.mean_lc /= n;
    report.mean_ga /= n;
    return report;
}

std::string format_report(
    const std::vector<std::pair<std::string, MetricReport>>& preset_reports) {
    std::ostringstream out;
    out << "lc_aggregation: arithmetic mean over n-gram orders with candidates\n";
    for (const auto& [name, report] : preset_reports) {
        out << "preset " << name << "\n";
        out << "la: " << fixed4(report.mean_la) << "\n";
        out << "lc: " << fixed4(report.mean_lc) << "\n";
        out << "ga: " << fixed4(report.mean_ga) << "\n";
        for (const ThresholdMetrics& m : report.per_threshold) {
            char thr[16];
            std::snprintf(thr, sizeof(thr), "%.2f", m.threshold);
            out << "threshold " << thr << " la_tp: " << m.la_tp << " la_n: " << m.la_n;
            if (m.la_n == 0) out << " (no ground-truth pairs)";
            out << " ga_tp: " << m.ga_tp << " ga_n: " << m.ga_n;
            if (m.ga_n == 0) out << " (no ground-truth blocks)";
            for (int n = 0; n < 5; ++n) {
                out << " lc" << (n + 1) << ": " << m.lc_match[n] << "/" << m.lc_cand[n];
            }
            out << "\n";
        }
    }
    return out.str();
}

}  // namespace ctb
