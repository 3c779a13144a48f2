#pragma once

// Differentiable operations on Tape variables. Every op computes its forward value
// eagerly and records a closure that accumulates input gradients during backward.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "dsgnn/numerics/tape.hpp"

namespace dsgnn::ops {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

inline CMapMat cmat(const DenseArray& a, std::size_t rows, std::size_t cols) {
    return CMapMat(a.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MapMat mmat(DenseArray& a, std::size_t rows, std::size_t cols) {
    return MapMat(a.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline Tape& tape_of(const Var& a) {
    if (!a.valid()) throw ContractError("operation on an unbound Var");
    return *a.tape();
}

inline Tape& tape_of(const Var& a, const Var& b) {
    Tape& t = tape_of(a);
    if (b.tape() != &t) throw ContractError("operands live on different tapes");
    return t;
}

inline void require_rank(const Var& a, std::size_t rank, const char* op) {
    if (a.value().rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_string(a.shape()));
    }
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

inline void accumulate(Tape& t, std::size_t id, const DenseArray& g) {
    auto& dst = t.grad_slot(id);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

/// Splits a shape around `axis` into (outer, axis length, inner) extents.
inline void axis_split(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& len, std::size_t& inner) {
    outer = 1;
    inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    len = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

} // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(const Var& a, const Var& b) {
    using namespace detail;
    Tape& t = tape_of(a, b);
    if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[0]) {
        throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                             shape_string(b.shape()));
    }
    const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    DenseArray out(Shape{n, m});
    mmat(out, n, m).noalias() = cmat(a.value(), n, k) * cmat(b.value(), k, m);
    return t.record(std::move(out), {a, b}, [ia = a.id(), ib = b.id(), n, k, m](Tape& t, std::size_t self) {
        const auto g = cmat(t.grad(self), n, m);
        if (t.requires_grad(ia)) mmat(t.grad_slot(ia), n, k).noalias() += g * cmat(t.value(ib), k, m).transpose();
        if (t.requires_grad(ib)) mmat(t.grad_slot(ib), k, m).noalias() += cmat(t.value(ia), n, k).transpose() * g;
    });
}

inline Var transpose(const Var& a) {
    using namespace detail;
    Tape& t = tape_of(a);
    require_rank(a, 2, "transpose");
    const std::size_t n = a.shape()[0], m = a.shape()[1];
    DenseArray out(Shape{m, n});
    mmat(out, m, n) = cmat(a.value(), n, m).transpose();
    return t.record(std::move(out), {a}, [ia = a.id(), n, m](Tape& t, std::size_t self) {
        mmat(t.grad_slot(ia), n, m) += cmat(t.grad(self), m, n).transpose();
    });
}

/// Batched product over the leading axis: [B,m,k] x [B,k,n] (or [B,n,k] when trans_b).
inline Var bmm(const Var& a, const Var& b, bool trans_b = false) {
    using namespace detail;
    Tape& t = tape_of(a, b);
    require_rank(a, 3, "bmm");
    require_rank(b, 3, "bmm");
    const std::size_t batch = a.shape()[0], m = a.shape()[1], k = a.shape()[2];
    const std::size_t bk = trans_b ? b.shape()[2] : b.shape()[1];
    const std::size_t n = trans_b ? b.shape()[1] : b.shape()[2];
    if (b.shape()[0] != batch || bk != k) {
        throw DimensionError("bmm: cannot multiply " + shape_string(a.shape()) + " by " + shape_string(b.shape()) +
                             (trans_b ? " (transposed)" : ""));
    }
    DenseArray out(Shape{batch, m, n});
    const std::size_t bsz = k * n;
    for (std::size_t i = 0; i < batch; ++i) {
        const auto A = CMapMat(a.value().data().data() + i * m * k, m, k);
        auto O = MapMat(out.data().data() + i * m * n, m, n);
        if (trans_b) {
            O.noalias() = A * CMapMat(b.value().data().data() + i * bsz, n, k).transpose();
        } else {
            O.noalias() = A * CMapMat(b.value().data().data() + i * bsz, k, n);
        }
    }
    return t.record(std::move(out), {a, b},
                    [ia = a.id(), ib = b.id(), batch, m, k, n, trans_b](Tape& t, std::size_t self) {
                        const double* g = t.grad(self).data().data();
                        const double* av = t.value(ia).data().data();
                        const double* bv = t.value(ib).data().data();
                        const bool ga = t.requires_grad(ia), gb = t.requires_grad(ib);
                        double* da = ga ? t.grad_slot(ia).data().data() : nullptr;
                        double* db = gb ? t.grad_slot(ib).data().data() : nullptr;
                        for (std::size_t i = 0; i < batch; ++i) {
                            const auto G = CMapMat(g + i * m * n, m, n);
                            const auto A = CMapMat(av + i * m * k, m, k);
                            if (trans_b) {
                                const auto B = CMapMat(bv + i * n * k, n, k);
                                if (ga) MapMat(da + i * m * k, m, k).noalias() += G * B;
                                if (gb) MapMat(db + i * n * k, n, k).noalias() += G.transpose() * A;
                            } else {
                                const auto B = CMapMat(bv + i * k * n, k, n);
                                if (ga) MapMat(da + i * m * k, m, k).noalias() += G * B.transpose();
                                if (gb) MapMat(db + i * k * n, k, n).noalias() += A.transpose() * G;
                            }
                        }
                    });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(const Var& a, const Var& b) {
    using namespace detail;
    Tape& t = tape_of(a, b);
    require_same_shape(a, b, "add");
    DenseArray out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return t.record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
        if (t.requires_grad(ia)) accumulate(t, ia, t.grad(self));
        if (t.requires_grad(ib)) accumulate(t, ib, t.grad(self));
    });
}

inline Var sub(const Var& a, const Var& b) {
    using namespace detail;
    Tape& t = tape_of(a, b);
    require_same_shape(a, b, "sub");
    DenseArray out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return t.record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(ia)) accumulate(t, ia, g);
        if (t.requires_grad(ib)) {
            auto& d = t.grad_slot(ib);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    using namespace detail;
    Tape& t = tape_of(a, b);
    require_same_shape(a, b, "mul");
    DenseArray out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return t.record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(ia)) {
            auto& d = t.grad_slot(ia);
            const auto& bv = t.value(ib);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bv[i];
        }
        if (t.requires_grad(ib)) {
            auto& d = t.grad_slot(ib);
            const auto& av = t.value(ia);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * av[i];
        }
    });
}

inline Var scale(const Var& a, double s) {
    using namespace detail;
    Tape& t = tape_of(a);
    DenseArray out = a.value();
    for (auto& v : out.data()) v *= s;
    return t.record(std::move(out), {a}, [ia = a.id(), s](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        auto& d = t.grad_slot(ia);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * g[i];
    });
}

/// Adds a bias vector along the last axis.
inline Var add_bias(const Var& a, const Var& bias) {
    using namespace detail;
    Tape& t = tape_of(a, bias);
    require_rank(bias, 1, "add_bias");
    const std::size_t m = bias.shape()[0];
    if (a.value().rank() == 0 || a.shape().back() != m) {
        throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                             shape_string(a.shape()));
    }
    const std::size_t rows = a.size() / m;
    DenseArray out = a.value();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < m; ++c) out[r * m + c] += bias.value()[c];
    return t.record(std::move(out), {a, bias}, [ia = a.id(), ib = bias.id(), rows, m](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(ia)) accumulate(t, ia, g);
        if (t.requires_grad(ib)) {
            auto& d = t.grad_slot(ib);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < m; ++c) d[c] += g[r * m + c];
        }
    });
}

/// Multiplies row i of `a` (leading axis) by s[i].
inline Var scale_rows(const Var& a, const Var& s) {
    using namespace detail;
    Tape& t = tape_of(a, s);
    require_rank(s, 1, "scale_rows");
    const std::size_t n = s.shape()[0];
    if (a.value().rank() == 0 || a.shape()[0] != n) {
        throw DimensionError("scale_rows: " + shape_string(s.shape()) + " does not match rows of " +
                             shape_string(a.shape()));
    }
    const std::size_t m = a.size() / n;
    DenseArray out = a.value();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) out[r * m + c] *= s.value()[r];
    return t.record(std::move(out), {a, s}, [ia = a.id(), is = s.id(), n, m](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(ia)) {
            auto& d = t.grad_slot(ia);
            const auto& sv = t.value(is);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < m; ++c) d[r * m + c] += g[r * m + c] * sv[r];
        }
        if (t.requires_grad(is)) {
            auto& d = t.grad_slot(is);
            const auto& av = t.value(ia);
            for (std::size_t r = 0; r < n; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < m; ++c) acc += g[r * m + c] * av[r * m + c];
                d[r] += acc;
            }
        }
    });
}

inline Var relu(const Var& a) {
    using namespace detail;
    Tape& t = tape_of(a);
    DenseArray out = a.value();
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    return t.record(std::move(out), {a}, [ia = a.id()](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& x = t.value(ia);
        auto& d = t.grad_slot(ia);
        for (std::size_t i = 0; i < d.size(); ++i)
            if (x[i] > 0.0) d[i] += g[i];
    });
}

inline Var sigmoid(const Var& a) {
    using namespace detail;
    Tape& t = tape_of(a);
    DenseArray out = a.value();
    for (auto& v : out.data()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return t.record(std::move(out), {a}, [ia = a.id()](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& y = t.value(self);
        auto& d = t.grad_slot(ia);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

inline Var abs(const Var& a) {
    using namespace detail;
    Tape& t = tape_of(a);
    DenseArray out = a.value();
    for (auto& v : out.data()) v = std::abs(v);
    return t.record(std::move(out), {a}, [ia = a.id()](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& x = t.value(ia);
        auto& d = t.grad_slot(ia);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0);
    });
}

/// Softmax along `axis` (default: last axis).
inline Var softmax(const Var& a, int axis = -1) {
    using namespace detail;
    Tape& t = tape_of(a);
    const auto rank = static_cast<int>(a.value().rank());
    const int ax = axis < 0 ? rank + axis : axis;
    if (rank == 0 || ax < 0 || ax >= rank) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_string(a.shape()));
    }
    std::size_t outer, len, inner;
    axis_split(a.shape(), static_cast<std::size_t>(ax), outer, len, inner);
    DenseArray out = a.value();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            double* base = out.data().data() + o * len * inner + in;
            double mx = base[0];
            for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, base[j * inner]);
            double z = 0.0;
            for (std::size_t j = 0; j < len; ++j) z += (base[j * inner] = std::exp(base[j * inner] - mx));
            for (std::size_t j = 0; j < len; ++j) base[j * inner] /= z;
        }
    }
    return t.record(std::move(out), {a}, [ia = a.id(), outer, len, inner](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& y = t.value(self);
        auto& d = t.grad_slot(ia);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                double dot = 0.0;
                for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
                for (std::size_t j = 0; j < len; ++j) {
                    const std::size_t i = base + j * inner;
                    d[i] += y[i] * (g[i] - dot);
                }
            }
        }
    });
}

/// Divides each row of a rank-2 array by its sum. Rows must have a non-zero sum.
inline Var row_normalize(const Var& a) {
    using namespace detail;
    Tape& t = tape_of(a);
    require_rank(a, 2, "row_normalize");
    const std::size_t n = a.shape()[0], m = a.shape()[1];
    DenseArray out = a.value();
    std::vector<double> sums(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < m; ++c) sums[r] += out[r * m + c];
        if (sums[r] == 0.0) throw ContractError("row_normalize: row " + std::to_string(r) + " sums to zero");
        for (std::size_t c = 0; c < m; ++c) out[r * m + c] /= sums[r];
    }
    return t.record(std::move(out), {a}, [ia = a.id(), n, m, sums](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& y = t.value(self);
        auto& d = t.grad_slot(ia);
        for (std::size_t r = 0; r < n; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < m; ++c) dot += g[r * m + c] * y[r * m + c];
            for (std::size_t c = 0; c < m; ++c) d[r * m + c] += (g[r * m + c] - dot) / sums[r];
        }
    });
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Var reshape(const Var& a, Shape shape) {
    using namespace detail;
    Tape& t = tape_of(a);
    DenseArray out = a.value().reshaped(std::move(shape));
    return t.record(std::move(out), {a}, [ia = a.id()](Tape& t, std::size_t self) {
        accumulate(t, ia, t.grad(self));
    });
}

/// Concatenates arrays along `axis` (default: last). All other extents must agree.
inline Var concat(const std::vector<Var>& parts, int axis = -1) {
    using namespace detail;
    if (parts.empty()) throw DimensionError("concat: no inputs");
    Tape& t = tape_of(parts.front());
    const Shape& s0 = parts.front().shape();
    const auto rank = static_cast<int>(s0.size());
    const int ax = axis < 0 ? rank + axis : axis;
    if (rank == 0 || ax < 0 || ax >= rank) {
        throw DimensionError("concat: axis " + std::to_string(axis) + " invalid for " + shape_string(s0));
    }
    std::size_t total = 0;
    std::vector<std::size_t> lens;
    for (const Var& p : parts) {
        if (p.tape() != &t) throw ContractError("concat: operands live on different tapes");
        const Shape& s = p.shape();
        bool ok = s.size() == s0.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i)
            if (static_cast<int>(i) != ax && s[i] != s0[i]) ok = false;
        if (!ok) {
            throw DimensionError("concat: " + shape_string(s) + " incompatible with " + shape_string(s0) +
                                 " along axis " + std::to_string(ax));
        }
        lens.push_back(s[static_cast<std::size_t>(ax)]);
        total += lens.back();
    }
    std::size_t outer, len0, inner;
    axis_split(s0, static_cast<std::size_t>(ax), outer, len0, inner);
    Shape out_shape = s0;
    out_shape[static_cast<std::size_t>(ax)] = total;
    DenseArray out(out_shape);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto& v = parts[p].value();
        const std::size_t block = lens[p] * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(v.data().data() + o * block, block, out.data().data() + o * total * inner + offset);
        offset += block;
    }
    std::vector<std::size_t> ids;
    for (const Var& p : parts) ids.push_back(p.id());
    return t.record(std::move(out), parts, [ids, lens, outer, inner, total](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        std::size_t offset = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
            const std::size_t block = lens[p] * inner;
            if (t.requires_grad(ids[p])) {
                auto& d = t.grad_slot(ids[p]);
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < block; ++i) d[o * block + i] += g[o * total * inner + offset + i];
            }
            offset += block;
        }
    });
}

/// Selects rows (leading-axis slices) by index; repeated indices are allowed.
inline Var gather_rows(const Var& a, const std::vector<std::size_t>& index) {
    using namespace detail;
    Tape& t = tape_of(a);
    if (a.value().rank() == 0) throw DimensionError("gather_rows: scalar input");
    if (index.empty()) throw DimensionError("gather_rows: empty index");
    const std::size_t n = a.shape()[0];
    const std::size_t m = a.size() / n;
    Shape out_shape = a.shape();
    out_shape[0] = index.size();
    DenseArray out(out_shape);
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= n) {
            throw DimensionError("gather_rows: index " + std::to_string(index[r]) + " out of range for " +
                                 shape_string(a.shape()));
        }
        std::copy_n(a.value().data().data() + index[r] * m, m, out.data().data() + r * m);
    }
    return t.record(std::move(out), {a}, [ia = a.id(), index, m](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        auto& d = t.grad_slot(ia);
        for (std::size_t r = 0; r < index.size(); ++r)
            for (std::size_t c = 0; c < m; ++c) d[index[r] * m + c] += g[r * m + c];
    });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(const Var& a) {
    using namespace detail;
    Tape& t = tape_of(a);
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return t.record(DenseArray::scalar(s), {a}, [ia = a.id()](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        for (auto& v : t.grad_slot(ia).data()) v += g;
    });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// Frobenius (l2) distance between two equally shaped arrays.
inline Var l2_distance(const Var& a, const Var& b) {
    using namespace detail;
    Tape& t = tape_of(a, b);
    require_same_shape(a, b, "l2_distance");
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.value()[i] - b.value()[i];
        ss += d * d;
    }
    const double norm = std::sqrt(ss);
    return t.record(DenseArray::scalar(norm), {a, b}, [ia = a.id(), ib = b.id(), norm](Tape& t, std::size_t self) {
        if (norm == 0.0) return;
        const double g = t.grad(self)[0] / norm;
        const auto& av = t.value(ia);
        const auto& bv = t.value(ib);
        if (t.requires_grad(ia)) {
            auto& d = t.grad_slot(ia);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * (av[i] - bv[i]);
        }
        if (t.requires_grad(ib)) {
            auto& d = t.grad_slot(ib);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g * (av[i] - bv[i]);
        }
    });
}

// ---------------------------------------------------------------------------
// Convolution and normalization

/// 3x3 convolution with zero "same" padding. x: [H,W,C], kernel: [3,3,C,O], bias: [O].
inline Var conv2d_3x3(const Var& x, const Var& kernel, const Var& bias) {
    using namespace detail;
    Tape& t = tape_of(x, kernel);
    require_rank(x, 3, "conv2d_3x3");
    require_rank(kernel, 4, "conv2d_3x3");
    require_rank(bias, 1, "conv2d_3x3");
    const std::size_t h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
    const Shape& ks = kernel.shape();
    if (ks[0] != 3 || ks[1] != 3 || ks[2] != c || bias.shape()[0] != ks[3]) {
        throw DimensionError("conv2d_3x3: input " + shape_string(x.shape()) + ", kernel " + shape_string(ks) +
                             ", bias " + shape_string(bias.shape()));
    }
    const std::size_t o = ks[3];
    const std::size_t p = h * w, kc = 9 * c;

    // im2col: row (i,j), column (ky,kx,ch)
    DenseArray cols(Shape{p, kc}, 0.0);
    const double* xv = x.value().data().data();
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            double* row = cols.data().data() + (i * w + j) * kc;
            for (std::size_t ky = 0; ky < 3; ++ky) {
                const long si = static_cast<long>(i) + static_cast<long>(ky) - 1;
                if (si < 0 || si >= static_cast<long>(h)) continue;
                for (std::size_t kx = 0; kx < 3; ++kx) {
                    const long sj = static_cast<long>(j) + static_cast<long>(kx) - 1;
                    if (sj < 0 || sj >= static_cast<long>(w)) continue;
                    std::copy_n(xv + (static_cast<std::size_t>(si) * w + static_cast<std::size_t>(sj)) * c, c,
                                row + (ky * 3 + kx) * c);
                }
            }
        }
    }
    DenseArray out(Shape{h, w, o});
    auto out_m = mmat(out, p, o);
    out_m.noalias() = cmat(cols, p, kc) * cmat(kernel.value(), kc, o);
    const auto bv = Eigen::Map<const Eigen::RowVectorXd>(bias.value().data().data(), static_cast<Eigen::Index>(o));
    out_m.rowwise() += bv;

    return t.record(std::move(out), {x, kernel, bias},
                    [ix = x.id(), ik = kernel.id(), ib = bias.id(), cols = std::move(cols), h, w, c, o, p,
                     kc](Tape& t, std::size_t self) {
                        const auto g = cmat(t.grad(self), p, o);
                        if (t.requires_grad(ik)) mmat(t.grad_slot(ik), kc, o).noalias() += cmat(cols, p, kc).transpose() * g;
                        if (t.requires_grad(ib)) {
                            auto& d = t.grad_slot(ib);
                            Eigen::Map<Eigen::RowVectorXd>(d.data().data(), static_cast<Eigen::Index>(o)) +=
                                g.colwise().sum();
                        }
                        if (t.requires_grad(ix)) {
                            RowMat dcols = g * cmat(t.value(ik), kc, o).transpose();
                            double* dx = t.grad_slot(ix).data().data();
                            for (std::size_t i = 0; i < h; ++i) {
                                for (std::size_t j = 0; j < w; ++j) {
                                    const double* row = dcols.data() + (i * w + j) * kc;
                                    for (std::size_t ky = 0; ky < 3; ++ky) {
                                        const long si = static_cast<long>(i) + static_cast<long>(ky) - 1;
                                        if (si < 0 || si >= static_cast<long>(h)) continue;
                                        for (std::size_t kx = 0; kx < 3; ++kx) {
                                            const long sj = static_cast<long>(j) + static_cast<long>(kx) - 1;
                                            if (sj < 0 || sj >= static_cast<long>(w)) continue;
                                            double* dst =
                                                dx + (static_cast<std::size_t>(si) * w + static_cast<std::size_t>(sj)) * c;
                                            const double* src = row + (ky * 3 + kx) * c;
                                            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
                                        }
                                    }
                                }
                            }
                        }
                    });
}

/// Full-width 1-D convolution over the last axis: one learned functional per row.
/// c: [P, L], weight: [L], bias: [1] -> [P].
inline Var conv1d_full(const Var& c, const Var& weight, const Var& bias) {
    detail::require_rank(c, 2, "conv1d_full");
    detail::require_rank(weight, 1, "conv1d_full");
    if (weight.shape()[0] != c.shape()[1] || bias.size() != 1) {
        throw DimensionError("conv1d_full: input " + shape_string(c.shape()) + ", weight " +
                             shape_string(weight.shape()) + ", bias " + shape_string(bias.shape()));
    }
    const Var proj = matmul(c, reshape(weight, Shape{weight.shape()[0], 1}));
    return reshape(add_bias(proj, reshape(bias, Shape{1})), Shape{c.shape()[0]});
}

/// Running statistics for a batch-normalization layer.
struct BatchNormState {
    DenseArray running_mean;
    DenseArray running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    BatchNormState() = default;
    explicit BatchNormState(std::size_t channels)
        : running_mean(Shape{channels}, 0.0), running_var(Shape{channels}, 1.0) {}
};

/// Per-channel normalization over all leading positions of x ([..., C]).
/// Training mode normalizes with batch statistics and updates the running averages;
/// evaluation mode uses the running averages.
inline Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, bool training) {
    using namespace detail;
    Tape& t = tape_of(x, gamma);
    if (x.value().rank() == 0) throw DimensionError("batch_norm: scalar input");
    const std::size_t ch = x.shape().back();
    if (gamma.size() != ch || beta.size() != ch || state.running_mean.size() != ch) {
        throw DimensionError("batch_norm: " + std::to_string(ch) + " channels but gamma " +
                             shape_string(gamma.shape()) + ", beta " + shape_string(beta.shape()));
    }
    const std::size_t p = x.size() / ch;
    const auto& xv = x.value();
    std::vector<double> mu(ch, 0.0), inv_std(ch, 0.0);
    if (training) {
        std::vector<double> var(ch, 0.0);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t k = 0; k < ch; ++k) mu[k] += xv[i * ch + k];
        for (auto& m : mu) m /= static_cast<double>(p);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t k = 0; k < ch; ++k) {
                const double d = xv[i * ch + k] - mu[k];
                var[k] += d * d;
            }
        for (std::size_t k = 0; k < ch; ++k) {
            const double biased = var[k] / static_cast<double>(p);
            const double unbiased = p > 1 ? var[k] / static_cast<double>(p - 1) : biased;
            inv_std[k] = 1.0 / std::sqrt(biased + state.eps);
            state.running_mean[k] = (1.0 - state.momentum) * state.running_mean[k] + state.momentum * mu[k];
            state.running_var[k] = (1.0 - state.momentum) * state.running_var[k] + state.momentum * unbiased;
        }
    } else {
        for (std::size_t k = 0; k < ch; ++k) {
            mu[k] = state.running_mean[k];
            inv_std[k] = 1.0 / std::sqrt(state.running_var[k] + state.eps);
        }
    }
    DenseArray xhat(x.shape());
    DenseArray out(x.shape());
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t k = 0; k < ch; ++k) {
            const std::size_t idx = i * ch + k;
            xhat[idx] = (xv[idx] - mu[k]) * inv_std[k];
            out[idx] = gamma.value()[k] * xhat[idx] + beta.value()[k];
        }
    return t.record(std::move(out), {x, gamma, beta},
                    [ix = x.id(), ig = gamma.id(), ib = beta.id(), xhat = std::move(xhat), inv_std, p, ch,
                     training](Tape& t, std::size_t self) {
                        const auto& g = t.grad(self);
                        std::vector<double> sum_g(ch, 0.0), sum_gx(ch, 0.0);
                        for (std::size_t i = 0; i < p; ++i)
                            for (std::size_t k = 0; k < ch; ++k) {
                                sum_g[k] += g[i * ch + k];
                                sum_gx[k] += g[i * ch + k] * xhat[i * ch + k];
                            }
                        if (t.requires_grad(ig)) {
                            auto& d = t.grad_slot(ig);
                            for (std::size_t k = 0; k < ch; ++k) d[k] += sum_gx[k];
                        }
                        if (t.requires_grad(ib)) {
                            auto& d = t.grad_slot(ib);
                            for (std::size_t k = 0; k < ch; ++k) d[k] += sum_g[k];
                        }
                        if (t.requires_grad(ix)) {
                            const auto& gam = t.value(ig);
                            auto& d = t.grad_slot(ix);
                            const double inv_p = 1.0 / static_cast<double>(p);
                            for (std::size_t i = 0; i < p; ++i)
                                for (std::size_t k = 0; k < ch; ++k) {
                                    const std::size_t idx = i * ch + k;
                                    const double scale_k = gam[k] * inv_std[k];
                                    d[idx] += training ? scale_k * (g[idx] - sum_g[k] * inv_p -
                                                                    xhat[idx] * sum_gx[k] * inv_p)
                                                       : scale_k * g[idx];
                                }
                        }
                    });
}

} // namespace dsgnn::ops
