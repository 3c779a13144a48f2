#pragma once

// Implicit correlations on the fully connected supergrid graph. Edge (i, j) lives at
// row i * N + j of the edge arrays; diagonal rows are computed but never aggregated.

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "dsgnn/model/layers.hpp"

namespace dsgnn {

/// Creates the edge perceptron `prefix.mlp` (2d -> d -> d_e).
inline void add_edge_encoder(ParamBundle& p, const std::string& prefix, std::size_t d, std::size_t d_edge,
                             std::uint64_t seed) {
    add_mlp2(p, prefix + ".mlp", 2 * d, d, d_edge, seed);
}

/// Creates the full-width scoring kernel `prefix.w` [d_e] and `prefix.b` [1].
inline void add_edge_scorer(ParamBundle& p, const std::string& prefix, std::size_t d_edge, std::uint64_t seed) {
    add_weight(p, prefix + ".w", Shape{d_edge}, d_edge, 1, seed);
    add_zeros(p, prefix + ".b", Shape{1});
}

/// c_ij = ReLU(MLP(concat(Z_i, Z_j))) for all ordered pairs; returns [N*N, d_e].
inline Var edge_representations(Tape& t, ParamBundle& p, const std::string& prefix, const Var& z) {
    if (z.value().rank() != 2) throw DimensionError("edge_representations: expected [N, d], got " + shape_string(z.shape()));
    const std::size_t n = z.shape()[0];
    if (n < 2) throw GraphError("edge_representations: a supergrid graph needs N >= 2, got " + std::to_string(n));
    std::vector<std::size_t> src(n * n), dst(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            src[i * n + j] = i;
            dst[i * n + j] = j;
        }
    const Var pairs = ops::concat({ops::gather_rows(z, src), ops::gather_rows(z, dst)}, 1);
    return ops::relu(mlp2(t, p, prefix + ".mlp", pairs));
}

/// q_ij = sigmoid(w . c_ij + b); returns [N, N].
inline Var edge_weights(Tape& t, ParamBundle& p, const std::string& prefix, const Var& c) {
    const std::size_t pairs = c.shape()[0];
    std::size_t n = 1;
    while (n * n < pairs) ++n;
    if (n * n != pairs) throw DimensionError("edge_weights: " + std::to_string(pairs) + " edges is not N*N");
    const Var logits = ops::conv1d_full(c, t.param(p, prefix + ".w"), t.param(p, prefix + ".b"));
    return ops::reshape(ops::sigmoid(logits), Shape{n, n});
}

/// Keeps, for every source supergrid i, the k largest q_ij over j != i (ties to the lower
/// j). Returns a 0/1 mask of the kept entries.
inline DenseArray topk_mask(const DenseArray& q, std::size_t k) {
    if (q.rank() != 2 || q.dim(0) != q.dim(1)) throw DimensionError("topk: expected a square matrix, got " + shape_string(q.shape()));
    const std::size_t n = q.dim(0);
    if (k < 1) throw ConfigError("topk: k must be >= 1");
    if (k >= n) {
        throw ConfigError("topk: k=" + std::to_string(k) + " must be smaller than the number of supergrids (" +
                          std::to_string(n) + ")");
    }
    DenseArray mask(q.shape(), 0.0);
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < n; ++i) {
        order.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) order.push_back(j);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return q(i, a) > q(i, b); });
        for (std::size_t r = 0; r < k; ++r) mask(i, order[r]) = 1.0;
    }
    return mask;
}

/// Value-level top-k sparsification: kept entries become 1 (binary) or keep q (weighted).
inline DenseArray sparsify_topk(const DenseArray& q, std::size_t k, bool weighted) {
    DenseArray out = topk_mask(q, k);
    if (weighted)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= q[i];
    return out;
}

} // namespace dsgnn
