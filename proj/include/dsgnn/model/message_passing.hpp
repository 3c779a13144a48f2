#pragma once

// One round of supergrid graph convolution, projection back to grid cells, and the
// convolutional grid update.

#include <string>
#include <vector>

#include "dsgnn/model/layers.hpp"

namespace dsgnn {

/// Constant [N, N*N] selector with a one at (i, i*N + j) for every j != i.
inline DenseArray incoming_selector(std::size_t n) {
    DenseArray sel(Shape{n, n * n}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) sel(i, i * n + j) = 1.0;
    return sel;
}

/// r_i = sum_{j != i} q_ij c_ij. c: [N*N, d_e], q: [N, N] -> [N, d_e].
inline Var aggregate(const Var& c, const Var& q) {
    if (q.value().rank() != 2 || q.shape()[0] != q.shape()[1] || c.shape()[0] != q.size()) {
        throw DimensionError("aggregate: edges " + shape_string(c.shape()) + " vs weights " + shape_string(q.shape()));
    }
    const std::size_t n = q.shape()[0];
    const Var weighted = ops::scale_rows(c, ops::reshape(q, Shape{n * n}));
    return ops::matmul(c.tape()->constant(incoming_selector(n)), weighted);
}

/// Creates `prefix.mlp` ((d + d_e) -> d -> d).
inline void add_supergrid_updater(ParamBundle& p, const std::string& prefix, std::size_t d, std::size_t d_edge,
                                  std::uint64_t seed) {
    add_mlp2(p, prefix + ".mlp", d + d_edge, d, d, seed);
}

/// Z'_i = MLP(concat(Z_i, r_i)).
inline Var update_supergrids(Tape& t, ParamBundle& p, const std::string& prefix, const Var& z, const Var& r) {
    if (z.shape()[0] != r.shape()[0]) {
        throw DimensionError("update_supergrids: " + shape_string(z.shape()) + " vs messages " + shape_string(r.shape()));
    }
    return mlp2(t, p, prefix + ".mlp", ops::concat({z, r}, 1));
}

/// X'_cell = sum_k S_cell,k Z'_k. Returns [cells, d].
inline Var s2g_update(const Var& s, const Var& z) { return ops::matmul(s, z); }

/// Grid update stack: conv3x3 (in -> d), batch norm, ReLU, conv3x3 (d -> d).
inline void add_grid_update(ParamBundle& p, const std::string& prefix, std::size_t in_channels, std::size_t d,
                            std::uint64_t seed) {
    add_weight(p, prefix + ".c1.k", Shape{3, 3, in_channels, d}, 9 * in_channels, 9 * d, seed);
    add_zeros(p, prefix + ".c1.b", Shape{d});
    p.add(prefix + ".bn.gamma", DenseArray(Shape{d}, 1.0));
    add_zeros(p, prefix + ".bn.beta", Shape{d});
    add_weight(p, prefix + ".c2.k", Shape{3, 3, d, d}, 9 * d, 9 * d, seed);
    add_zeros(p, prefix + ".c2.b", Shape{d});
}

/// First convolution of the grid update. blocks: each [H, W, d_k], concatenated along
/// channels first. Returns [H, W, d] before normalization.
inline Var g_update_conv1(Tape& t, ParamBundle& p, const std::string& prefix, const std::vector<Var>& blocks) {
    if (blocks.empty()) throw DimensionError("g_update: no input blocks");
    for (const auto& b : blocks) {
        if (b.value().rank() != 3 || b.shape()[0] != blocks[0].shape()[0] || b.shape()[1] != blocks[0].shape()[1]) {
            throw DimensionError("g_update: block " + shape_string(b.shape()) + " does not match " +
                                 shape_string(blocks[0].shape()));
        }
    }
    const Var x = blocks.size() == 1 ? blocks[0] : ops::concat(blocks, 2);
    return ops::conv2d_3x3(x, t.param(p, prefix + ".c1.k"), t.param(p, prefix + ".c1.b"));
}

/// ReLU and the second convolution, applied to the normalized first-stage output.
inline Var g_update_tail(Tape& t, ParamBundle& p, const std::string& prefix, const Var& normalized) {
    return ops::conv2d_3x3(ops::relu(normalized), t.param(p, prefix + ".c2.k"), t.param(p, prefix + ".c2.b"));
}

/// Batch norm of several samples ([H, W, C] each) with statistics pooled over all of them.
inline std::vector<Var> batch_norm_samples(const std::vector<Var>& xs, const Var& gamma, const Var& beta,
                                           ops::BatchNormState& bn, bool training) {
    if (xs.empty()) throw DimensionError("batch_norm_samples: no inputs");
    if (xs.size() == 1) return {ops::batch_norm(xs[0], gamma, beta, bn, training)};
    const std::size_t rows = xs[0].shape()[0];
    const Var joint = ops::batch_norm(ops::concat(xs, 0), gamma, beta, bn, training);
    std::vector<Var> out;
    for (std::size_t b = 0; b < xs.size(); ++b) {
        std::vector<std::size_t> idx(rows);
        for (std::size_t r = 0; r < rows; ++r) idx[r] = b * rows + r;
        out.push_back(ops::gather_rows(joint, idx));
    }
    return out;
}

/// Single-sample grid update: conv3x3 -> batch norm -> ReLU -> conv3x3. Returns [H, W, d].
inline Var g_update(Tape& t, ParamBundle& p, const std::string& prefix, const std::vector<Var>& blocks,
                    ops::BatchNormState& bn, bool training) {
    const Var h = g_update_conv1(t, p, prefix, blocks);
    return g_update_tail(t, p, prefix,
                         ops::batch_norm(h, t.param(p, prefix + ".bn.gamma"), t.param(p, prefix + ".bn.beta"), bn, training));
}

} // namespace dsgnn
