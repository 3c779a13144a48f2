#pragma once

// Per-cell temporal encoder: scaled dot-product self-attention over the time axis,
// flatten, then a two-layer perceptron. All cells share the parameters and are
// processed as one batch.

#include <cmath>
#include <string>

#include "dsgnn/model/layers.hpp"

namespace dsgnn {

struct TemporalEncoderShape {
    std::size_t channels = 1;  // c, features per time step
    std::size_t steps = 1;     // tau
    std::size_t attn = 8;      // d_a
    std::size_t hidden = 8;    // d_h
    std::size_t out = 8;       // d
};

/// Creates `prefix.{q,k,v}` [c, d_a] and `prefix.mlp.{l1,l2}`.
inline void add_temporal_encoder(ParamBundle& p, const std::string& prefix, const TemporalEncoderShape& s,
                                 std::uint64_t seed) {
    for (const char* m : {".q", ".k", ".v"}) add_weight(p, prefix + m, Shape{s.channels, s.attn}, s.channels, s.attn, seed);
    add_mlp2(p, prefix + ".mlp", s.steps * s.attn, s.hidden, s.out, seed);
}

struct EncoderTrace {
    Var attention;  // [P, tau, tau], rows sum to one
    Var output;     // [P, d]
};

/// seq: [P, tau, c] for P independent cells. Returns the attention weights as well.
inline EncoderTrace encode_traced(Tape& t, ParamBundle& p, const std::string& prefix, const Var& seq) {
    using namespace ops;
    const Var q = t.param(p, prefix + ".q");
    if (seq.value().rank() != 3) throw DimensionError("encode: expected [cells, tau, channels], got " + shape_string(seq.shape()));
    const std::size_t cells = seq.shape()[0], steps = seq.shape()[1], c = seq.shape()[2];
    const std::size_t da = q.shape()[1];
    if (q.shape()[0] != c) {
        throw DimensionError("encode: input has " + std::to_string(c) + " channels, projections expect " +
                             std::to_string(q.shape()[0]));
    }
    const Var w1 = t.param(p, prefix + ".mlp.l1.w");
    if (w1.shape()[0] != steps * da) {
        throw DimensionError("encode: window of " + std::to_string(steps) + " steps, encoder built for " +
                             std::to_string(w1.shape()[0] / da));
    }
    const Var flat = reshape(seq, Shape{cells * steps, c});
    const Var qs = reshape(matmul(flat, q), Shape{cells, steps, da});
    const Var ks = reshape(matmul(flat, t.param(p, prefix + ".k")), Shape{cells, steps, da});
    const Var vs = reshape(matmul(flat, t.param(p, prefix + ".v")), Shape{cells, steps, da});
    const Var attn = softmax(scale(bmm(qs, ks, true), 1.0 / std::sqrt(static_cast<double>(da))), 2);
    const Var mixed = reshape(bmm(attn, vs), Shape{cells, steps * da});
    return {attn, mlp2(t, p, prefix + ".mlp", mixed)};
}

inline Var encode_cells(Tape& t, ParamBundle& p, const std::string& prefix, const Var& seq) {
    return encode_traced(t, p, prefix, seq).output;
}

/// Single series [tau, c] -> [d].
inline Var encode(Tape& t, ParamBundle& p, const std::string& prefix, const Var& series) {
    if (series.value().rank() != 2) throw DimensionError("encode: expected [tau, channels], got " + shape_string(series.shape()));
    const Var out = encode_cells(t, p, prefix, ops::reshape(series, Shape{1, series.shape()[0], series.shape()[1]}));
    return ops::reshape(out, Shape{out.shape()[1]});
}

/// Window [H, W, tau, c] -> representation [H, W, d].
inline Var encode_grid(Tape& t, ParamBundle& p, const std::string& prefix, const Var& window) {
    if (window.value().rank() != 4) throw DimensionError("encode_grid: expected [H, W, tau, c], got " + shape_string(window.shape()));
    const auto& s = window.shape();
    const Var out = encode_cells(t, p, prefix, ops::reshape(window, Shape{s[0] * s[1], s[2], s[3]}));
    return ops::reshape(out, Shape{s[0], s[1], out.shape()[1]});
}

} // namespace dsgnn
