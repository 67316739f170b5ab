#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "ctb/dataset.hpp"
#include "ctb/embeddings.hpp"
#include "ctb/geometry.hpp"
#include "ctb/tensor.hpp"

namespace ctb {

inline constexpr std::size_t kAttentionLayers = 6;
inline constexpr double kLayerNormEps = 1e-5;

struct GeneratorConfig {
    std::size_t heads = 8;  // 3d must be divisible by heads
};

struct AttentionLayerWeights {
    Matrix wq, wk, wv, wo;                    // 3d x 3d
    std::vector<double> bq, bk, bv, bo;       // 3d
    Matrix wf;                                // post-attention linear, 3d x 3d
    std::vector<double> bf;
    std::vector<double> ln1_gain, ln1_shift;  // pre-attention layer norm
    std::vector<double> ln2_gain, ln2_shift;  // pre-linear layer norm
};

struct GeneratorWeights {
    std::vector<AttentionLayerWeights> layers;  // kAttentionLayers entries
    Matrix iph_w;                               // 3d x (n_index + 1)
    std::vector<double> iph_b;

    // Archive names: att.<l>.{Wq,bq,Wk,bk,Wv,bv,Wo,bo,Wf,bf,ln1.g,ln1.b,ln2.g,ln2.b}
    // for l in [0, 6), plus iph.W and iph.b.
    static GeneratorWeights from_archive(const TensorArchive& archive, const EmbeddingConfig& ecfg,
                                         const GeneratorConfig& gcfg);
};

// Per layer, per head attention probabilities (r x r), captured on request.
struct AttentionTrace {
    std::vector<std::vector<Matrix>> layer_head_weights;
};

/// Six pre-norm attention blocks: u = x + MHSA(LN1(x)), y = u + Linear(LN2(u)).
/// Tokens serve as values, keys, and queries; scaled dot-product per head
/// with scale 1/sqrt(3d/h).
Matrix attention_forward(const TokenMatrix& tokens, const GeneratorWeights& w,
                         const GeneratorConfig& cfg, AttentionTrace* trace = nullptr);

struct IndexAssignment {
    std::vector<std::size_t> classes;  // per token, in [0, n_index]
};

// logits = hidden * iph.W + iph.b; argmax per row, ties toward the lowest
// class id.
std::pair<Matrix, IndexAssignment> predict_indices(const Matrix& hidden,
                                                   const GeneratorWeights& w);

struct TargetVector {
    std::vector<std::size_t> classes;  // per token, in [0, n_index]
};

/// Training-target construction for the (N+1)-way index classification:
/// a token matched to a ground-truth unit with a matched successor targets
/// the successor token's assigned index; a token matched to a block-final
/// unit (or one whose successor went undetected) targets its own index;
/// an unmatched token targets the "not a text" class n_index.
TargetVector build_targets(const Matching& matching, const ImageAnnotation& gt,
                           const TokenMatrix& tokens, std::size_t n_index);

// Mean over tokens of -log softmax(logits)[target], max-subtracted.
double cross_entropy(const Matrix& logits, const TargetVector& targets);

// Directed graph over tokens kept as text; out-degree <= 1, self-edges mark
// block terminators.
struct IndexGraph {
    std::vector<std::size_t> vertices;            // ascending token ids
    std::map<std::size_t, std::size_t> successor;  // source -> target
};

IndexGraph build_graph(const IndexAssignment& assignment, const TokenMatrix& tokens,
                       std::size_t n_index);

struct BlockPrediction {
    std::vector<std::vector<std::size_t>> blocks;  // ordered token-id sequences
};

/// Weakly connected components (union-find over undirected edges, self-edges
/// ignored), each linearized from its zero-in-degree start following
/// successor edges. Deterministic degenerate handling: cycles start at the
/// lowest id; leftover vertices of a component are appended as additional
/// traversals in id order.
BlockPrediction extract_blocks(const IndexGraph& g);

}  // namespace ctb
