#include "ctb/generator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "ctb/errors.hpp"
#include "ctb/union_find.hpp"

namespace ctb {

namespace {

Matrix layer_norm(const Matrix& x, std::span<const double> gain, std::span<const double> shift) {
    Matrix out(x.rows, x.cols);
    const auto n = static_cast<double>(x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) mean += x.at(i, j);
        mean /= n;
        double var = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) {
            const double dv = x.at(i, j) - mean;
            var += dv * dv;
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t j = 0; j < x.cols; ++j) {
            out.at(i, j) = (x.at(i, j) - mean) * inv * gain[j] + shift[j];
        }
    }
    return out;
}

void softmax_rows(Matrix& m) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double mx = m.at(i, 0);
        for (std::size_t j = 1; j < m.cols; ++j) mx = std::max(mx, m.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) {
            m.at(i, j) = std::exp(m.at(i, j) - mx);
            denom += m.at(i, j);
        }
        for (std::size_t j = 0; j < m.cols; ++j) m.at(i, j) /= denom;
    }
}

Matrix multi_head_attention(const Matrix& x, const AttentionLayerWeights& w, std::size_t heads,
                            std::vector<Matrix>* head_trace) {
    const std::size_t dim = x.cols;
    const std::size_t head_dim = dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    const Matrix q = affine(x, w.wq, w.bq);
    const Matrix k = affine(x, w.wk, w.bk);
    const Matrix v = affine(x, w.wv, w.bv);

    Matrix concat(x.rows, dim);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * head_dim;
        Matrix scores(x.rows, x.rows);
        for (std::size_t i = 0; i < x.rows; ++i) {
            for (std::size_t j = 0; j < x.rows; ++j) {
                double acc = 0.0;
                for (std::size_t c = 0; c < head_dim; ++c) {
                    acc += q.at(i, off + c) * k.at(j, off + c);
                }
                scores.at(i, j) = acc * scale;
            }
        }
        softmax_rows(scores);
        if (head_trace) head_trace->push_back(scores);
        for (std::size_t i = 0; i < x.rows; ++i) {
            for (std::size_t c = 0; c < head_dim; ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < x.rows; ++j) {
                    acc += scores.at(i, j) * v.at(j, off + c);
                }
                concat.at(i, off + c) = acc;
            }
        }
    }
    return affine(concat, w.wo, w.bo);
}

}  // namespace

GeneratorWeights GeneratorWeights::from_archive(const TensorArchive& archive,
                                                const EmbeddingConfig& ecfg,
                                                const GeneratorConfig& gcfg) {
    ecfg.check();
    const std::size_t dim = 3 * ecfg.d;
    if (gcfg.heads == 0 || dim % gcfg.heads != 0) {
        throw ShapeError("token dimension 3d must be divisible by head count");
    }

    GeneratorWeights w;
    w.layers.reserve(kAttentionLayers);
    for (std::size_t l = 0; l < kAttentionLayers; ++l) {
        const std::string p = "att." + std::to_string(l) + ".";
        AttentionLayerWeights lw;
        lw.wq = archive.matrix(p + "Wq", dim, dim);
        lw.bq = archive.vector(p + "bq", dim);
        lw.wk = archive.matrix(p + "Wk", dim, dim);
        lw.bk = archive.vector(p + "bk", dim);
        lw.wv = archive.matrix(p + "Wv", dim, dim);
        lw.bv = archive.vector(p + "bv", dim);
        lw.wo = archive.matrix(p + "Wo", dim, dim);
        lw.bo = archive.vector(p + "bo", dim);
        lw.wf = archive.matrix(p + "Wf", dim, dim);
        lw.bf = archive.vector(p + "bf", dim);
        lw.ln1_gain = archive.vector(p + "ln1.g", dim);
        lw.ln1_shift = archive.vector(p + "ln1.b", dim);
        lw.ln2_gain = archive.vector(p + "ln2.g", dim);
        lw.ln2_shift = archive.vector(p + "ln2.b", dim);
        w.layers.push_back(std::move(lw));
    }
    w.iph_w = archive.matrix("iph.W", dim, ecfg.n_index + 1);
    w.iph_b = archive.vector("iph.b", ecfg.n_index + 1);
    return w;
}

Matrix attention_forward(const TokenMatrix& tokens, const GeneratorWeights& w,
                         const GeneratorConfig& cfg, AttentionTrace* trace) {
    if (tokens.rows == 0) throw ShapeError("attention_forward requires at least one token");
    if (w.layers.size() != kAttentionLayers) {
        throw ShapeError("generator weights must carry six attention layers");
    }
    if (cfg.heads == 0 || tokens.dim % cfg.heads != 0) {
        throw ShapeError("token dimension must be divisible by head count");
    }
    if (trace) trace->layer_head_weights.assign(kAttentionLayers, {});

    Matrix x = tokens.matrix();
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const AttentionLayerWeights& lw = w.layers[l];
        if (lw.wq.rows != tokens.dim) throw ShapeError("attention layer width differs from tokens");

        const Matrix normed = layer_norm(x, lw.ln1_gain, lw.ln1_shift);
        const Matrix attn = multi_head_attention(
            normed, lw, cfg.heads, trace ? &trace->layer_head_weights[l] : nullptr);
        Matrix u = x;
        for (std::size_t i = 0; i < u.data.size(); ++i) u.data[i] += attn.data[i];

        const Matrix normed2 = layer_norm(u, lw.ln2_gain, lw.ln2_shift);
        const Matrix lin = affine(normed2, lw.wf, lw.bf);
        x = u;
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += lin.data[i];
    }
    return x;
}

std::pair<Matrix, IndexAssignment> predict_indices(const Matrix& hidden,
                                                   const GeneratorWeights& w) {
    if (hidden.cols != w.iph_w.rows) throw ShapeError("hidden width differs from iph.W rows");
    Matrix logits = affine(hidden, w.iph_w, w.iph_b);
    IndexAssignment assignment;
    assignment.classes.resize(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols; ++j) {
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        }
        assignment.classes[i] = best;
    }
    return {std::move(logits), std::move(assignment)};
}

TargetVector build_targets(const Matching& matching, const ImageAnnotation& gt,
                           const TokenMatrix& tokens, std::size_t n_index) {
    const std::size_t r = tokens.rows;

    // gt unit index -> (block, position)
    std::unordered_map<std::string, std::size_t> unit_pos;
    for (std::size_t u = 0; u < gt.units.size(); ++u) unit_pos[gt.units[u].unit_id] = u;
    std::vector<std::optional<std::pair<std::size_t, std::size_t>>> placement(gt.units.size());
    for (std::size_t b = 0; b < gt.blocks.size(); ++b) {
        const auto& ids = gt.blocks[b].units;
        for (std::size_t pos = 0; pos < ids.size(); ++pos) {
            auto it = unit_pos.find(ids[pos]);
            if (it == unit_pos.end()) {
                throw ValidationError("block references missing unit '" + ids[pos] + "'");
            }
            placement[it->second] = {b, pos};
        }
    }

    std::vector<std::optional<std::size_t>> det_of_gt(gt.units.size());
    std::vector<std::optional<std::size_t>> gt_of_det(r);
    for (const MatchPair& p : matching.pairs) {
        if (p.det_id >= r) throw ShapeError("matching references detection beyond token count");
        if (p.gt_id >= gt.units.size()) {
            throw ShapeError("matching references ground-truth unit beyond annotation");
        }
        det_of_gt[p.gt_id] = p.det_id;
        gt_of_det[p.det_id] = p.gt_id;
    }

    TargetVector targets;
    targets.classes.assign(r, n_index);
    for (std::size_t i = 0; i < r; ++i) {
        if (!gt_of_det[i]) continue;  // false alarm: "not a text"
        const std::size_t g = *gt_of_det[i];
        if (!placement[g]) {
            throw ValidationError("matched unit '" + gt.units[g].unit_id + "' belongs to no block");
        }
        const auto [block, pos] = *placement[g];
        const auto& ids = gt.blocks[block].units;
        if (pos + 1 < ids.size()) {
            const std::size_t succ = unit_pos.at(ids[pos + 1]);
            if (det_of_gt[succ]) {
                targets.classes[i] = tokens.assigned_indices[*det_of_gt[succ]];
                continue;
            }
            // Successor went undetected: treat this token as a chain end.
        }
        targets.classes[i] = tokens.assigned_indices[i];
    }
    return targets;
}

double cross_entropy(const Matrix& logits, const TargetVector& targets) {
    if (targets.classes.size() != logits.rows) {
        throw ShapeError("target count differs from logit rows");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const std::size_t t = targets.classes[i];
        if (t >= logits.cols) throw ShapeError("target class beyond logit width");
        double mx = logits.at(i, 0);
        for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, logits.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) denom += std::exp(logits.at(i, j) - mx);
        total += mx + std::log(denom) - logits.at(i, t);
    }
    return logits.rows == 0 ? 0.0 : total / static_cast<double>(logits.rows);
}

IndexGraph build_graph(const IndexAssignment& assignment, const TokenMatrix& tokens,
                       std::size_t n_index) {
    if (assignment.classes.size() != tokens.rows) {
        throw ShapeError("assignment does not cover all tokens");
    }

    IndexGraph g;
    std::unordered_map<std::size_t, std::size_t> token_of_index;
    for (std::size_t i = 0; i < tokens.rows; ++i) {
        if (assignment.classes[i] == n_index) continue;  // "not a text"
        g.vertices.push_back(i);
        token_of_index[tokens.assigned_indices[i]] = i;
    }
    for (std::size_t i : g.vertices) {
        const auto it = token_of_index.find(assignment.classes[i]);
        if (it != token_of_index.end()) g.successor[i] = it->second;
        // Predicted class matching no surviving token's index: no out-edge.
    }
    return g;
}

BlockPrediction extract_blocks(const IndexGraph& g) {
    const std::size_t n = g.vertices.size();
    std::unordered_map<std::size_t, std::size_t> slot_of;
    for (std::size_t s = 0; s < n; ++s) slot_of[g.vertices[s]] = s;

    UnionFind uf(n);
    std::vector<std::size_t> in_degree(n, 0);  // non-self edges only
    for (const auto& [src, dst] : g.successor) {
        if (src == dst) continue;
        uf.unite(slot_of.at(src), slot_of.at(dst));
        ++in_degree[slot_of.at(dst)];
    }

    std::map<std::size_t, std::vector<std::size_t>> members;  // root slot -> vertex ids
    for (std::size_t s = 0; s < n; ++s) members[uf.find(s)].push_back(g.vertices[s]);

    BlockPrediction out;
    std::vector<bool> visited(n, false);
    for (auto& [root, ids] : members) {
        std::sort(ids.begin(), ids.end());

        std::vector<std::size_t> order;
        auto traverse = [&](std::size_t start) {
            std::size_t cur = start;
            while (!visited[slot_of.at(cur)]) {
                visited[slot_of.at(cur)] = true;
                order.push_back(cur);
                const auto it = g.successor.find(cur);
                if (it == g.successor.end() || it->second == cur) break;
                cur = it->second;
            }
        };

        // Prefer zero-in-degree starts in id order, then sweep up leftovers
        // (multi-start components, cycles) in id order.
        for (std::size_t id : ids) {
            if (in_degree[slot_of.at(id)] == 0 && !visited[slot_of.at(id)]) traverse(id);
        }
        for (std::size_t id : ids) {
            if (!visited[slot_of.at(id)]) traverse(id);
        }
        out.blocks.push_back(std::move(order));
    }

    std::sort(out.blocks.begin(), out.blocks.end(),
              [](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
                  return *std::min_element(a.begin(), a.end()) <
                         *std::min_element(b.begin(), b.end());
              });
    return out;
}

}  // namespace ctb
