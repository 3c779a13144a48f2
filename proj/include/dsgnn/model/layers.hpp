#pragma once

// Small building blocks shared by the model components: named dense layers and
// two-layer perceptrons whose parameters live in a ParamBundle.

#include <string>
#include <string_view>

#include "dsgnn/numerics/ops.hpp"
#include "dsgnn/numerics/param_bundle.hpp"
#include "dsgnn/numerics/tape.hpp"

namespace dsgnn {

using ops::BatchNormState;

/// FNV-1a, used to give every parameter its own init stream independent of creation order.
inline std::uint64_t name_hash(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline Rng param_rng(std::uint64_t seed, std::string_view name) { return Rng(derive_seed(seed, name_hash(name))); }

/// Adds a Glorot-initialized weight `name` of `shape` with the given fans.
inline void add_weight(ParamBundle& p, const std::string& name, Shape shape, std::size_t fan_in, std::size_t fan_out,
                       std::uint64_t seed) {
    Rng rng = param_rng(seed, name);
    p.add(name, glorot_uniform(std::move(shape), fan_in, fan_out, rng));
}

inline void add_zeros(ParamBundle& p, const std::string& name, Shape shape) { p.add(name, DenseArray(std::move(shape), 0.0)); }

/// Dense layer `prefix.w` [in, out] and `prefix.b` [out].
inline void add_dense(ParamBundle& p, const std::string& prefix, std::size_t in, std::size_t out, std::uint64_t seed) {
    add_weight(p, prefix + ".w", Shape{in, out}, in, out, seed);
    add_zeros(p, prefix + ".b", Shape{out});
}

inline Var dense(Tape& t, ParamBundle& p, const std::string& prefix, const Var& x) {
    return ops::add_bias(ops::matmul(x, t.param(p, prefix + ".w")), t.param(p, prefix + ".b"));
}

/// Linear -> ReLU -> Linear.
inline void add_mlp2(ParamBundle& p, const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
                     std::uint64_t seed) {
    add_dense(p, prefix + ".l1", in, hidden, seed);
    add_dense(p, prefix + ".l2", hidden, out, seed);
}

inline Var mlp2(Tape& t, ParamBundle& p, const std::string& prefix, const Var& x) {
    return dense(t, p, prefix + ".l2", ops::relu(dense(t, p, prefix + ".l1", x)));
}

/// Adds `value` (a constant) to every element of x.
inline Var add_constant(const Var& x, double value) {
    Tape& t = *x.tape();
    return ops::add(x, t.constant(DenseArray(x.shape(), value)));
}

} // namespace dsgnn
