#pragma once

// Independent loop-based reimplementations used as test oracles. They deliberately
// avoid the library's ops and work on plain nested vectors.

#include <algorithm>
#include <cmath>
#include <vector>

#include "dsgnn/numerics/dense_array.hpp"

namespace dsgnn::testing {

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const DenseArray& a) {
    Matrix m(a.dim(0), std::vector<double>(a.dim(1)));
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) m[i][j] = a(i, j);
    return m;
}

inline Matrix matmul_loop(const Matrix& a, const Matrix& b) {
    Matrix out(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < b.size(); ++k)
            for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
    return out;
}

/// Per-row assignment: softmax, drop entries below rho (keep the first maximum when
/// everything drops), renormalize.
inline Matrix assignment_oracle(const Matrix& logits, double rho) {
    Matrix out = logits;
    for (auto& row : out) {
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double& v : row) z += (v = std::exp(v - mx));
        for (double& v : row) v /= z;
        std::vector<bool> keep(row.size());
        bool any = false;
        for (std::size_t k = 0; k < row.size(); ++k) any |= (keep[k] = row[k] >= rho);
        if (!any) keep[std::max_element(row.begin(), row.end()) - row.begin()] = true;
        double s = 0.0;
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (!keep[k]) row[k] = 0.0;
            s += row[k];
        }
        for (double& v : row) v /= s;
    }
    return out;
}

/// Z_k = sum_cell S[cell][k] X[cell].
inline Matrix pool_oracle(const Matrix& s, const Matrix& x) {
    Matrix z(s[0].size(), std::vector<double>(x[0].size(), 0.0));
    for (std::size_t cell = 0; cell < s.size(); ++cell)
        for (std::size_t k = 0; k < s[0].size(); ++k)
            for (std::size_t f = 0; f < x[0].size(); ++f) z[k][f] += s[cell][k] * x[cell][f];
    return z;
}

/// r_i = sum_{j != i} q[i][j] c[i*N+j].
inline Matrix aggregate_oracle(const Matrix& c, const Matrix& q) {
    const std::size_t n = q.size();
    Matrix r(n, std::vector<double>(c[0].size(), 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            for (std::size_t f = 0; f < c[0].size(); ++f) r[i][f] += q[i][j] * c[i * n + j][f];
        }
    return r;
}

/// X'_cell = sum_k S[cell][k] Z[k].
inline Matrix s2g_oracle(const Matrix& s, const Matrix& z) {
    Matrix x(s.size(), std::vector<double>(z[0].size(), 0.0));
    for (std::size_t cell = 0; cell < s.size(); ++cell)
        for (std::size_t k = 0; k < z.size(); ++k)
            for (std::size_t f = 0; f < z[0].size(); ++f) x[cell][f] += s[cell][k] * z[k][f];
    return x;
}

inline double est_loss_oracle(const std::vector<double>& est, const std::vector<double>& truth_by_target,
                              const std::vector<std::size_t>& targets) {
    double s = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) s += std::abs(est[targets[i]] - truth_by_target[i]);
    return s / static_cast<double>(targets.size());
}

inline double mae_oracle(const Matrix& est, const Matrix& truth) {
    double s = 0.0;
    double n = 0.0;
    for (std::size_t b = 0; b < est.size(); ++b)
        for (std::size_t i = 0; i < est[b].size(); ++i) {
            s += std::abs(est[b][i] - truth[b][i]);
            n += 1.0;
        }
    return s / n;
}

inline double max_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
    return m;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Matrix m(r, std::vector<double>(c));
    for (auto& row : m)
        for (auto& v : row) v = rng.uniform(lo, hi);
    return m;
}

inline DenseArray to_array(const Matrix& m) {
    DenseArray a(Shape{m.size(), m[0].size()});
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < m[0].size(); ++j) a(i, j) = m[i][j];
    return a;
}

/// Row-stochastic random matrix with a random subset of zeros.
inline Matrix random_stochastic(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m = random_matrix(r, c, rng, 0.0, 1.0);
    for (auto& row : m) {
        for (auto& v : row)
            if (rng.uniform() < 0.3) v = 0.0;
        row[rng.index(c)] += 0.5;
        double s = 0.0;
        for (double v : row) s += v;
        for (auto& v : row) v /= s;
    }
    return m;
}

} // namespace dsgnn::testing
