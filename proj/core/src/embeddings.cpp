#include "ctb/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ctb/errors.hpp"

namespace ctb {

namespace {

std::vector<double> relu_affine(std::span<const double> x, const Matrix& w,
                                std::span<const double> b) {
    if (x.size() != w.rows) throw ShapeError("spatial embedding: input width differs from W rows");
    std::vector<double> out(w.cols, 0.0);
    for (std::size_t j = 0; j < w.cols; ++j) {
        double acc = b.empty() ? 0.0 : b[j];
        for (std::size_t i = 0; i < w.rows; ++i) acc += x[i] * w.at(i, j);
        out[j] = std::max(0.0, acc);
    }
    return out;
}

double bilinear_sample(const FeatureMap& fm, std::size_t c, double fx, double fy) {
    const auto clamp_x = [&](long v) {
        return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(fm.width) - 1));
    };
    const auto clamp_y = [&](long v) {
        return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(fm.height) - 1));
    };
    const double xf = std::floor(fx);
    const double yf = std::floor(fy);
    const std::size_t x0 = clamp_x(static_cast<long>(xf));
    const std::size_t x1 = clamp_x(static_cast<long>(xf) + 1);
    const std::size_t y0 = clamp_y(static_cast<long>(yf));
    const std::size_t y1 = clamp_y(static_cast<long>(yf) + 1);
    const double tx = fx - xf;
    const double ty = fy - yf;
    const double top = fm.at(c, y0, x0) * (1.0 - tx) + fm.at(c, y0, x1) * tx;
    const double bot = fm.at(c, y1, x0) * (1.0 - tx) + fm.at(c, y1, x1) * tx;
    return top * (1.0 - ty) + bot * ty;
}

}  // namespace

void EmbeddingConfig::check() const {
    if (d < 4 || d % 2 != 0) throw ShapeError("embedding dimension d must be even and >= 4");
    if (roi < 1) throw ShapeError("ROI grid side must be >= 1");
    if (n_index < 1) throw ShapeError("index class count must be >= 1");
}

std::vector<double> indexing_embedding(std::size_t index, std::size_t d) {
    std::vector<double> out(d);
    const double di = static_cast<double>(index);
    for (std::size_t k = 0; k < d; ++k) {
        const double exponent = 2.0 * std::floor(static_cast<double>(k) / 2.0) /
                                static_cast<double>(d);
        const double arg = di / std::pow(10000.0, exponent);
        out[k] = (k % 2 == 0) ? std::sin(arg) : std::cos(arg);
    }
    return out;
}

std::array<double, 7> spatial_vector(const Rect& box) {
    const double w = box.width();
    const double h = box.height();
    return {w, h, box.x1, box.y1, box.x2, box.y2, w * h};
}

std::vector<double> spatial_embedding(const std::array<double, 7>& v, const TensorArchive& w,
                                      const EmbeddingConfig& cfg) {
    const Matrix w1 = w.matrix("se.W1", 7, cfg.d);
    const std::vector<double> b1 = w.vector("se.b1", cfg.d);
    const Matrix w2 = w.matrix("se.W2", cfg.d, cfg.d);
    const std::vector<double> b2 = w.vector("se.b2", cfg.d);
    const std::vector<double> hidden = relu_affine(std::span<const double>(v), w1, b1);
    return relu_affine(hidden, w2, b2);
}

FeatureMap feature_map_from_archive(const TensorArchive& archive) {
    const Tensor& fm = archive.require("featmap");
    if (fm.shape.size() != 3) throw ShapeError("tensor featmap must have shape C x H0 x W0");
    const std::vector<double> stride = archive.vector("stride", 1);
    FeatureMap out;
    out.channels = fm.shape[0];
    out.height = fm.shape[1];
    out.width = fm.shape[2];
    out.data = fm.values;
    out.stride = stride[0];
    if (out.stride <= 0.0) throw ShapeError("feature map stride must be positive");
    return out;
}

std::vector<double> roi_align(const FeatureMap& fm, const Rect& box, std::size_t grid) {
    if (fm.stride <= 0.0) throw ShapeError("feature map stride must be positive");
    const double fx1 = box.x1 / fm.stride;
    const double fy1 = box.y1 / fm.stride;
    const double bin_w = (box.x2 - box.x1) / fm.stride / static_cast<double>(grid);
    const double bin_h = (box.y2 - box.y1) / fm.stride / static_cast<double>(grid);

    std::vector<double> out(fm.channels * grid * grid, 0.0);
    for (std::size_t c = 0; c < fm.channels; ++c) {
        for (std::size_t by = 0; by < grid; ++by) {
            for (std::size_t bx = 0; bx < grid; ++bx) {
                double acc = 0.0;
                for (int sy = 0; sy < 2; ++sy) {
                    for (int sx = 0; sx < 2; ++sx) {
                        const double px =
                            fx1 + (static_cast<double>(bx) + (sx + 0.5) / 2.0) * bin_w;
                        const double py =
                            fy1 + (static_cast<double>(by) + (sy + 0.5) / 2.0) * bin_h;
                        acc += bilinear_sample(fm, c, px, py);
                    }
                }
                out[(c * grid + by) * grid + bx] = acc / 4.0;
            }
        }
    }
    return out;
}

std::vector<double> feature_embedding(const std::vector<double>& grid, const TensorArchive& w,
                                      const EmbeddingConfig& cfg) {
    const Matrix fw = w.matrix("fe.W", grid.size(), cfg.d);
    const std::vector<double> fb = w.vector("fe.b", cfg.d);
    std::vector<double> out(cfg.d);
    for (std::size_t j = 0; j < cfg.d; ++j) {
        double acc = fb[j];
        for (std::size_t i = 0; i < grid.size(); ++i) acc += grid[i] * fw.at(i, j);
        out[j] = acc;
    }
    return out;
}

std::vector<std::size_t> sample_unique_indices(std::size_t count, std::size_t n_index,
                                               std::uint64_t seed) {
    if (count > n_index) {
        throw ShapeError("unit count exceeds index capacity N (" + std::to_string(count) + " > " +
                         std::to_string(n_index) + ")");
    }
    std::vector<std::size_t> pool(n_index);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        // Engine output reduced by modulo: deterministic across platforms,
        // bias negligible for desk-scale N.
        const std::size_t j = i + static_cast<std::size_t>(rng() % (n_index - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    return pool;
}

TokenMatrix build_tokens(const std::vector<Polygon>& units, const FeatureMap& fm,
                         const TensorArchive& w, const EmbeddingConfig& cfg, std::uint64_t seed) {
    cfg.check();
    TokenMatrix tokens;
    tokens.rows = units.size();
    tokens.dim = 3 * cfg.d;
    tokens.assigned_indices = sample_unique_indices(units.size(), cfg.n_index, seed);
    tokens.data.resize(tokens.rows * tokens.dim);

    for (std::size_t i = 0; i < units.size(); ++i) {
        const Rect box = polygon_bounds(units[i]);
        const std::vector<double> fe =
            feature_embedding(roi_align(fm, box, cfg.roi), w, cfg);
        const std::vector<double> ie = indexing_embedding(tokens.assigned_indices[i], cfg.d);
        const std::vector<double> se = spatial_embedding(spatial_vector(box), w, cfg);

        double* row = tokens.data.data() + i * tokens.dim;
        std::copy(fe.begin(), fe.end(), row);
        std::copy(ie.begin(), ie.end(), row + cfg.d);
        std::copy(se.begin(), se.end(), row + 2 * cfg.d);
    }
    return tokens;
}

}  // namespace ctb
