#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ctb/geometry.hpp"
#include "ctb/tensor.hpp"

namespace ctb {

struct EmbeddingConfig {
    std::size_t d = 64;        // per-embedding dimension; even, >= 4
    std::size_t roi = 7;       // ROI grid side
    std::size_t n_index = 1000;  // index class count; class n_index is "not a text"

    void check() const;
};

// Backbone feature map, consumed as input (channel-major storage).
struct FeatureMap {
    std::size_t channels{};
    std::size_t height{};
    std::size_t width{};
    std::vector<double> data;  // size channels * height * width
    double stride = 1.0;       // image pixels per feature cell

    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * height + y) * width + x];
    }
};

// Concatenated integral text tokens: row i = [feature | indexing | spatial],
// each part d wide.
struct TokenMatrix {
    std::size_t rows{};
    std::size_t dim{};  // 3d
    std::vector<double> data;
    std::vector<std::size_t> assigned_indices;  // pairwise distinct, in [0, n_index)

    Matrix matrix() const {
        Matrix m(rows, dim);
        m.data = data;
        return m;
    }
};

/// Sinusoidal encoding of an assigned index: component 2k is
/// sin(i / 10000^(2k/d)), component 2k+1 is cos of the same argument.
std::vector<double> indexing_embedding(std::size_t index, std::size_t d);

// (w, h, x1, y1, x2, y2, w*h)
std::array<double, 7> spatial_vector(const Rect& box);

// Two affine maps with rectification after each: max(0, max(0, v W1 + b1) W2 + b2).
// Uses archive tensors se.W1 (7 x d), se.b1, se.W2 (d x d), se.b2.
std::vector<double> spatial_embedding(const std::array<double, 7>& v, const TensorArchive& w,
                                      const EmbeddingConfig& cfg);

// Reads tensors `featmap` (C x H0 x W0) and `stride` (shape [1]) from a
// CTBW archive.
FeatureMap feature_map_from_archive(const TensorArchive& archive);

/// Average-of-bilinear-samples ROI pooling. The box is converted from image
/// pixels to feature coordinates by dividing by the stride (no rounding);
/// each of grid x grid bins is sampled at 2x2 regularly spaced interior
/// points, bilinearly interpolated with edge clamping, and averaged.
/// Returns a channel-major grid of size channels * grid * grid.
std::vector<double> roi_align(const FeatureMap& fm, const Rect& box, std::size_t grid);

// Flatten channel-major and project: grid * fe.W + fe.b, fe.W is (C*R*R) x d.
std::vector<double> feature_embedding(const std::vector<double>& grid, const TensorArchive& w,
                                      const EmbeddingConfig& cfg);

// Uniform sample of `count` distinct values from [0, n_index), deterministic
// per seed (partial Fisher-Yates over a fixed engine).
std::vector<std::size_t> sample_unique_indices(std::size_t count, std::size_t n_index,
                                               std::uint64_t seed);

TokenMatrix build_tokens(const std::vector<Polygon>& units, const FeatureMap& fm,
                         const TensorArchive& w, const EmbeddingConfig& cfg, std::uint64_t seed);

}  // namespace ctb
