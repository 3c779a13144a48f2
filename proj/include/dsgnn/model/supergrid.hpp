#pragma once

// Supergrid assignment: cell embeddings -> row-stochastic, sparsified membership
// matrices, plus the static embedding obtained by factorizing the training series.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dsgnn/model/layers.hpp"
#include "dsgnn/numerics/adam.hpp"

namespace dsgnn {

struct StaticSemantics {
    DenseArray embedding;  // [cells, d], one row per grid cell
    DenseArray factor;     // [d, columns]
    double relative_error = 0.0;  // ||M - E F||_F / ||M||_F (0 when M = 0)
    double loss = 0.0;            // ||M - E F||_F^2
};

struct FactorizeOptions {
    std::size_t iters = 1500;
    double lr = 0.01;
    double init_scale = 0.1;
};

/// Minimizes ||M - E F||_F^2 by Adam from a small seeded uniform start.
inline StaticSemantics factorize_static(const DenseArray& m, std::size_t d, std::uint64_t seed,
                                        const FactorizeOptions& opt = {}) {
    if (m.rank() != 2) throw DimensionError("factorize_static: expected a matrix, got " + shape_string(m.shape()));
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    if (d == 0 || d > cols) {
        throw ConfigError("factorize_static: rank d=" + std::to_string(d) + " must lie in [1, " + std::to_string(cols) +
                          "] (number of training columns)");
    }
    ParamBundle p;
    Rng rng(seed);
    auto init = [&](Shape s) {
        DenseArray a(std::move(s));
        for (auto& v : a.data()) v = rng.uniform(-opt.init_scale, opt.init_scale);
        return a;
    };
    p.add("E", init(Shape{rows, d}));
    p.add("F", init(Shape{d, cols}));
    Adam adam(AdamOptions{.lr = opt.lr});

    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Map = Eigen::Map<Mat>;
    using CMap = Eigen::Map<const Mat>;
    const CMap target(m.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    Mat resid;
    auto residual = [&] {
        const CMap e(p.value("E").data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
        const CMap f(p.value("F").data().data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(cols));
        resid.noalias() = e * f;
        resid -= target;
    };
    for (std::size_t it = 0; it < opt.iters; ++it) {
        residual();
        const CMap e(p.value("E").data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
        const CMap f(p.value("F").data().data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(cols));
        Map ge(p.grad("E").data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
        Map gf(p.grad("F").data().data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(cols));
        ge.noalias() = 2.0 * resid * f.transpose();
        gf.noalias() = 2.0 * e.transpose() * resid;
        adam.step(p);
    }
    residual();
    StaticSemantics out;
    out.loss = resid.squaredNorm();
    const double norm = target.norm();
    out.relative_error = norm > 0.0 ? std::sqrt(out.loss) / norm : 0.0;
    out.embedding = p.value("E");
    out.factor = p.value("F");
    return out;
}

/// 0/1 mask of the entries kept by the sparse threshold: p >= rho, or the row maximum
/// (lowest index on ties) when no entry of the row reaches rho.
inline DenseArray threshold_mask(const DenseArray& probs, double rho) {
    if (probs.rank() != 2) throw DimensionError("threshold_mask: expected a matrix, got " + shape_string(probs.shape()));
    const std::size_t rows = probs.dim(0), n = probs.dim(1);
    DenseArray mask(probs.shape(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        bool any = false;
        std::size_t best = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const double v = probs(r, k);
            if (v >= rho) {
                mask(r, k) = 1.0;
                any = true;
            }
            if (v > probs(r, best)) best = k;
        }
        if (!any) mask(r, best) = 1.0;
    }
    return mask;
}

inline void check_rho(double rho) {
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("assignment threshold rho must lie in (0, 1), got " + std::to_string(rho));
}

/// Row softmax over the supergrid axis, then (optionally) the sparse threshold and row
/// renormalization. Gradients reach the surviving entries only.
inline Var assignment_from_logits(const Var& logits, double rho, bool threshold = true) {
    check_rho(rho);
    if (logits.value().rank() != 2) {
        throw DimensionError("assignment: logits must be [cells, supergrids], got " + shape_string(logits.shape()));
    }
    const Var probs = ops::softmax(logits, 1);
    if (!threshold) return probs;
    const Var mask = logits.tape()->constant(threshold_mask(probs.value(), rho));
    return ops::row_normalize(ops::mul(probs, mask));
}

/// S = sparsify(softmax(E W_map)).
inline Var build_assignment(const Var& embedding, const Var& mapper, double rho, bool threshold = true) {
    return assignment_from_logits(ops::matmul(embedding, mapper), rho, threshold);
}

/// Z = S^T X. X may be [cells, d] or [H, W, d].
inline Var pool_supergrids(const Var& x, const Var& s) {
    const Var flat = x.value().rank() == 3 ? ops::reshape(x, Shape{x.shape()[0] * x.shape()[1], x.shape()[2]}) : x;
    if (flat.shape()[0] != s.shape()[0]) {
        throw DimensionError("pool_supergrids: representation " + shape_string(x.shape()) + " vs assignment " +
                             shape_string(s.shape()));
    }
    return ops::matmul(ops::transpose(s), flat);
}

/// Hard label per cell: argmax of its assignment row, lowest index on ties.
inline std::vector<int> label_map(const DenseArray& s) {
    std::vector<int> labels(s.dim(0), 0);
    for (std::size_t r = 0; r < s.dim(0); ++r) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < s.dim(1); ++k)
            if (s(r, k) > s(r, best)) best = k;
        labels[r] = static_cast<int>(best);
    }
    return labels;
}

} // namespace dsgnn
