#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "ctb/dataset.hpp"
#include "ctb/geometry.hpp"

namespace ctbtest {

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        const auto tag = std::to_string(rd()) + "-" + std::to_string(rd());
        dir_ = std::filesystem::temp_directory_path() / ("ctb-test-" + tag);
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (dir_ / name).string(); }

private:
    std::filesystem::path dir_;
};

inline void spit(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct CliResult {
    int exit_code{};
    std::string output;  // stdout and stderr interleaved
};

#ifdef CTB_CLI_PATH
inline CliResult run_cli(const std::string& args) {
    const std::string cmd = std::string(CTB_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    CliResult result;
    if (!pipe) {
        result.exit_code = -1;
        return result;
    }
    char buf[4096];
    std::size_t n = 0;
    while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) result.output.append(buf, n);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}
#endif

inline ctb::Polygon rect_poly(double x1, double y1, double x2, double y2) {
    return ctb::rect_polygon(ctb::Rect{x1, y1, x2, y2});
}

inline ctb::IntegralUnit make_unit(std::string id, const ctb::Rect& box) {
    ctb::IntegralUnit u;
    u.unit_id = std::move(id);
    u.polygon = ctb::rect_polygon(box);
    return u;
}

inline ctb::PredictionSet predictions_from(const ctb::Dataset& gt) {
    ctb::PredictionSet pred;
    pred.images = gt.images;
    return pred;
}

// Disjoint grid-placed unit boxes partitioned into consecutive blocks.
inline ctb::ImageAnnotation random_image(std::mt19937& rng, const std::string& image_id,
                                         int max_units = 24) {
    std::uniform_int_distribution<int> unit_count(1, max_units);
    std::uniform_real_distribution<double> jitter(2.0, 30.0);
    std::uniform_real_distribution<double> size(20.0, 60.0);
    std::uniform_int_distribution<int> block_len(1, 5);

    ctb::ImageAnnotation img;
    img.image_id = image_id;
    img.width = 1000;
    img.height = 1000;

    const int n = unit_count(rng);
    for (int i = 0; i < n; ++i) {
        const double cx = static_cast<double>(i % 10) * 100.0 + jitter(rng);
        const double cy = static_cast<double>(i / 10) * 100.0 + jitter(rng);
        const double w = size(rng);
        const double h = size(rng);
        img.units.push_back(make_unit("u" + std::to_string(i), ctb::Rect{cx, cy, cx + w, cy + h}));
    }

    int next = 0;
    int bid = 0;
    while (next < n) {
        ctb::ContextualBlock block;
        block.block_id = "b" + std::to_string(bid++);
        const int len = std::min(block_len(rng), n - next);
        for (int k = 0; k < len; ++k) block.units.push_back("u" + std::to_string(next++));
        img.blocks.push_back(std::move(block));
    }
    return img;
}

inline ctb::Dataset random_dataset(std::mt19937& rng, int n_images, int max_units = 24) {
    ctb::Dataset d;
    for (int i = 0; i < n_images; ++i) {
        d.images.push_back(random_image(rng, "img" + std::to_string(i), max_units));
    }
    return d;
}

// Imperfect predictions: dropped units, jittered boxes (some falling under
// the usual thresholds), false alarms, and a mix of faithful and scrambled
// block structures. Detected units always partition into blocks.
inline ctb::PredictionSet noisy_predictions(const ctb::Dataset& gt, std::mt19937& rng) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_real_distribution<double> jitter(-12.0, 12.0);
    std::uniform_real_distribution<double> pos(0.0, 900.0);

    ctb::PredictionSet pred;
    for (const ctb::ImageAnnotation& img : gt.images) {
        ctb::ImageAnnotation out;
        out.image_id = img.image_id;
        out.width = img.width;
        out.height = img.height;

        std::vector<std::string> det_of_gt(img.units.size());
        int next_det = 0;
        const auto clamp_x = [&](double v) {
            return std::clamp(v, 0.0, static_cast<double>(img.width));
        };
        const auto clamp_y = [&](double v) {
            return std::clamp(v, 0.0, static_cast<double>(img.height));
        };
        for (std::size_t u = 0; u < img.units.size(); ++u) {
            if (coin(rng) > 0.85) continue;  // missed detection
            const ctb::Rect b = ctb::polygon_bounds(img.units[u].polygon);
            const ctb::Rect noisy{clamp_x(b.x1 + jitter(rng)), clamp_y(b.y1 + jitter(rng)),
                                  clamp_x(b.x2 + jitter(rng)), clamp_y(b.y2 + jitter(rng))};
            if (noisy.x2 <= noisy.x1 || noisy.y2 <= noisy.y1) continue;
            const std::string id = "d" + std::to_string(next_det++);
            det_of_gt[u] = id;
            out.units.push_back(make_unit(id, noisy));
        }
        const int n_false = static_cast<int>(coin(rng) * 3.0);
        std::vector<std::string> extras;
        for (int f = 0; f < n_false; ++f) {
            const double x = pos(rng), y = pos(rng);
            const std::string id = "d" + std::to_string(next_det++);
            extras.push_back(id);
            out.units.push_back(make_unit(id, ctb::Rect{x, y, x + 30.0, y + 25.0}));
        }

        int bid = 0;
        if (coin(rng) < 0.6) {
            // Follow the ground-truth block structure over detected units.
            for (const ctb::ContextualBlock& b : img.blocks) {
                ctb::ContextualBlock pb;
                pb.block_id = "p" + std::to_string(bid++);
                for (const std::string& uid : b.units) {
                    for (std::size_t u = 0; u < img.units.size(); ++u) {
                        if (img.units[u].unit_id == uid && !det_of_gt[u].empty()) {
                            pb.units.push_back(det_of_gt[u]);
                        }
                    }
                }
                if (!pb.units.empty()) out.blocks.push_back(std::move(pb));
            }
            for (const std::string& id : extras) {
                out.blocks.push_back(ctb::ContextualBlock{"p" + std::to_string(bid++), {id}});
            }
        } else {
            // Scrambled chunks over every detected unit.
            std::vector<std::string> ids;
            for (const ctb::IntegralUnit& u : out.units) ids.push_back(u.unit_id);
            std::shuffle(ids.begin(), ids.end(), rng);
            std::size_t at = 0;
            while (at < ids.size()) {
                const std::size_t len =
                    std::min<std::size_t>(1 + static_cast<std::size_t>(coin(rng) * 4.0),
                                          ids.size() - at);
                ctb::ContextualBlock pb;
                pb.block_id = "p" + std::to_string(bid++);
                pb.units.assign(ids.begin() + at, ids.begin() + at + len);
                at += len;
                out.blocks.push_back(std::move(pb));
            }
        }
        pred.images.push_back(std::move(out));
    }
    return pred;
}

}  // namespace ctbtest
