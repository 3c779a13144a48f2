#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dsgnn/model/correlation.hpp"
#include "dsgnn/model/fusion_loss.hpp"
#include "dsgnn/model/message_passing.hpp"
#include "dsgnn/model/supergrid.hpp"
#include "dsgnn/model/temporal_encoder.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace dsgnn;
using namespace dsgnn::testing;

namespace {

constexpr double kGradTol = 1e-4;

ParamBundle encoder_bundle(std::size_t c, std::size_t tau, std::size_t d, std::uint64_t seed = 1) {
    ParamBundle p;
    add_temporal_encoder(p, "te", {c, tau, d, d, d}, seed);
    // Non-zero biases so that the oracle exercises them.
    Rng rng(seed + 100);
    for (const char* b : {"te.mlp.l1.b", "te.mlp.l2.b"})
        for (auto& v : p.value(b).data()) v = rng.uniform(-0.5, 0.5);
    return p;
}

// Plain-loop evaluation of the encoder for one series [tau][c].
std::vector<double> encoder_oracle(const ParamBundle& p, const Matrix& seq) {
    const Matrix q = to_matrix(p.value("te.q")), k = to_matrix(p.value("te.k")), v = to_matrix(p.value("te.v"));
    const Matrix sq = matmul_loop(seq, q), sk = matmul_loop(seq, k), sv = matmul_loop(seq, v);
    const std::size_t tau = seq.size(), da = q[0].size();
    std::vector<double> flat;
    for (std::size_t i = 0; i < tau; ++i) {
        std::vector<double> s(tau);
        for (std::size_t j = 0; j < tau; ++j) {
            double dot = 0;
            for (std::size_t f = 0; f < da; ++f) dot += sq[i][f] * sk[j][f];
            s[j] = dot / std::sqrt(double(da));
        }
        const double mx = *std::max_element(s.begin(), s.end());
        double z = 0;
        for (auto& x : s) z += (x = std::exp(x - mx));
        for (std::size_t f = 0; f < da; ++f) {
            double acc = 0;
            for (std::size_t j = 0; j < tau; ++j) acc += s[j] / z * sv[j][f];
            flat.push_back(acc);
        }
    }
    auto layer = [&](const std::vector<double>& x, const char* name, bool relu) {
        const auto& w = p.value(std::string(name) + ".w");
        const auto& b = p.value(std::string(name) + ".b");
        std::vector<double> y(w.dim(1));
        for (std::size_t o = 0; o < y.size(); ++o) {
            double acc = b[o];
            for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * w(i, o);
            y[o] = relu ? std::max(0.0, acc) : acc;
        }
        return y;
    };
    return layer(layer(flat, "te.mlp.l1", true), "te.mlp.l2", false);
}

DenseArray series_array(const Matrix& m) { return to_array(m); }

} // namespace

// ---------------------------------------------------------------------------
// Temporal encoder

TEST(TemporalEncoder, SingleStepCollapsesToValueProjection) {
    auto p = encoder_bundle(3, 1, 4);
    Rng rng(2);
    const Matrix seq = random_matrix(1, 3, rng);
    Tape t;
    const Var out = encode(t, p, "te", t.constant(series_array(seq)));
    // With one step the attention weight is exactly 1, so the mixed vector is seq * V.
    const auto expect = encoder_oracle(p, seq);
    ASSERT_EQ(out.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.value()[i], expect[i], 1e-12);
    const auto trace = encode_traced(t, p, "te", t.constant(series_array(seq).reshaped(Shape{1, 1, 3})));
    EXPECT_EQ(trace.attention.value()[0], 1.0);
}

TEST(TemporalEncoder, IdenticalStepsGiveIdenticalAttentionRows) {
    auto p = encoder_bundle(2, 3, 4);
    Tape t;
    const Matrix seq = {{0.3, -0.2}, {0.3, -0.2}, {1.0, 0.5}};
    const auto tr = encode_traced(t, p, "te", t.constant(series_array(seq).reshaped(Shape{1, 3, 2})));
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(tr.attention.value()[j], tr.attention.value()[3 + j]);
}

TEST(TemporalEncoder, MatchesLoopOracleAndRowsSumToOne) {
    auto p = encoder_bundle(3, 4, 5);
    Rng rng(3);
    const std::size_t cells = 6;
    DenseArray batch(Shape{cells, 4, 3});
    std::vector<Matrix> series;
    for (std::size_t c = 0; c < cells; ++c) {
        series.push_back(random_matrix(4, 3, rng));
        for (std::size_t s = 0; s < 4; ++s)
            for (std::size_t f = 0; f < 3; ++f) batch[(c * 4 + s) * 3 + f] = series.back()[s][f];
    }
    Tape t;
    const auto tr = encode_traced(t, p, "te", t.constant(batch));
    for (std::size_t c = 0; c < cells; ++c) {
        const auto expect = encoder_oracle(p, series[c]);
        for (std::size_t o = 0; o < 5; ++o) EXPECT_NEAR(tr.output.value()[c * 5 + o], expect[o], 1e-12);
    }
    for (std::size_t r = 0; r < cells * 4; ++r) {
        double s = 0;
        for (std::size_t j = 0; j < 4; ++j) s += tr.attention.value()[r * 4 + j];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(TemporalEncoder, GradientWithRespectToProjections) {
    auto p = encoder_bundle(3, 3, 4);
    Rng rng(4);
    const DenseArray seq = random_array(Shape{5, 3, 3}, rng);
    const auto res = check_bundle(p, [&](Tape& t) { return ops::sum(encode_cells(t, p, "te", t.constant(seq))); });
    EXPECT_LT(res.max_rel_error, kGradTol) << res.worst;
}

TEST(TemporalEncoder, GridIsPerCellAndShared) {
    auto p = encoder_bundle(2, 2, 3);
    Rng rng(5);
    DenseArray window = random_array(Shape{4, 4, 2, 2}, rng);
    Tape t;
    const Var out = encode_grid(t, p, "te", t.constant(window));
    ASSERT_EQ(out.shape(), (Shape{4, 4, 3}));
    // Cell-by-cell calls agree.
    for (std::size_t cell = 0; cell < 16; ++cell) {
        Matrix s(2, std::vector<double>(2));
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t f = 0; f < 2; ++f) s[k][f] = window[(cell * 2 + k) * 2 + f];
        const Var single = encode(t, p, "te", t.constant(series_array(s)));
        for (std::size_t o = 0; o < 3; ++o) EXPECT_NEAR(out.value()[cell * 3 + o], single.value()[o], 1e-12);
    }
    // Swapping two cells swaps their outputs; changing a cell changes only that cell.
    DenseArray swapped = window;
    for (std::size_t i = 0; i < 4; ++i) std::swap(swapped[0 * 4 + i], swapped[5 * 4 + i]);
    swapped[15 * 4] += 1.0;
    const Var out2 = encode_grid(t, p, "te", t.constant(swapped));
    for (std::size_t cell = 0; cell < 15; ++cell) {
        const std::size_t src = cell == 0 ? 5 : (cell == 5 ? 0 : cell);
        for (std::size_t o = 0; o < 3; ++o) EXPECT_EQ(out2.value()[cell * 3 + o], out.value()[src * 3 + o]);
    }
    EXPECT_NE(out2.value()[45], out.value()[45]);
    // Constant-in-space input gives constant-in-space output.
    DenseArray flat(Shape{4, 4, 2, 2});
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = 0.1 * double(i % 4);
    const Var out3 = encode_grid(t, p, "te", t.constant(flat));
    for (std::size_t cell = 1; cell < 16; ++cell)
        for (std::size_t o = 0; o < 3; ++o) EXPECT_EQ(out3.value()[cell * 3 + o], out3.value()[o]);
}

TEST(TemporalEncoder, WindowLengthMismatchIsShapeError) {
    auto p = encoder_bundle(2, 3, 4);
    Tape t;
    EXPECT_THROW(encode_cells(t, p, "te", t.constant(DenseArray(Shape{2, 4, 2}))), DimensionError);
    EXPECT_THROW(encode_cells(t, p, "te", t.constant(DenseArray(Shape{2, 3, 5}))), DimensionError);
}

TEST(TemporalEncoder, SeparateInstancesHoldDisjointParameters) {
    ParamBundle p;
    add_temporal_encoder(p, "aod.te_init", {7, 6, 8, 8, 8}, 0);
    add_temporal_encoder(p, "aod.te_dyn", {1, 6, 8, 8, 8}, 0);
    std::size_t init = 0, dyn = 0;
    for (const auto& n : p.names()) {
        init += n.starts_with("aod.te_init.");
        dyn += n.starts_with("aod.te_dyn.");
    }
    EXPECT_EQ(init, 7u);
    EXPECT_EQ(dyn, 7u);
    EXPECT_EQ(p.size(), 14u);
}

// ---------------------------------------------------------------------------
// Static factorization and assignments

TEST(Factorize, RankOneTargetIsRecovered) {
    DenseArray m(Shape{12, 9});
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = 0; j < 9; ++j) m(i, j) = (1.0 + 0.1 * double(i)) * std::sin(0.7 * double(j) + 0.3);
    const auto res = factorize_static(m, 2, 7, {.iters = 3000, .lr = 0.01});
    EXPECT_LE(res.relative_error, 1e-3);
    EXPECT_EQ(res.embedding.shape(), (Shape{12, 2}));
}

TEST(Factorize, ZeroTargetReachesZeroLoss) {
    const auto res = factorize_static(DenseArray(Shape{10, 6}, 0.0), 3, 1, {.iters = 2000, .lr = 0.01});
    EXPECT_LT(res.loss, 1e-8);
}

TEST(Factorize, RandomRankThreeNearTruncatedSvd) {
    Rng rng(8);
    const Matrix u = random_matrix(20, 3, rng), v = random_matrix(3, 15, rng);
    const DenseArray m = to_array(matmul_loop(u, v));
    const auto res = factorize_static(m, 3, 2, {.iters = 2000, .lr = 0.01});
    // The truncated SVD error of an exact rank-3 matrix is zero; allow the stated tolerance.
    EXPECT_LE(res.relative_error, 1e-2);
}

TEST(Factorize, RankAboveColumnsIsConfigError) {
    EXPECT_THROW(factorize_static(DenseArray(Shape{4, 3}, 1.0), 4, 0), ConfigError);
}

TEST(Assignment, ThresholdThenRenormalize) {
    Tape t;
    // softmax(ln 9, 0) = (0.9, 0.1).
    const Var s = assignment_from_logits(t.constant(DenseArray::matrix(1, 2, {std::log(9.0), 0.0})), 0.4);
    EXPECT_DOUBLE_EQ(s.value()(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(s.value()(0, 1), 0.0);
    const Var u = assignment_from_logits(t.constant(DenseArray(Shape{1, 5}, 0.3)), 0.4);
    EXPECT_DOUBLE_EQ(u.value()(0, 0), 1.0);
    for (std::size_t k = 1; k < 5; ++k) EXPECT_EQ(u.value()(0, k), 0.0);
    EXPECT_THROW(assignment_from_logits(t.constant(DenseArray(Shape{1, 5}, 0.3)), 1.0), ConfigError);
}

TEST(Assignment, RandomCasesMatchRowOracle) {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t cells = 3 + rng.index(10), d = 1 + rng.index(5), n = 2 + rng.index(6);
        const double rho = rng.uniform(0.05, 0.95);
        const Matrix e = random_matrix(cells, d, rng, -2, 2), w = random_matrix(d, n, rng, -2, 2);
        Tape t;
        const Var s = build_assignment(t.constant(to_array(e)), t.constant(to_array(w)), rho);
        const Matrix expect = assignment_oracle(matmul_loop(e, w), rho);
        for (std::size_t r = 0; r < cells; ++r) {
            double sum = 0;
            for (std::size_t k = 0; k < n; ++k) {
                const double v = s.value()(r, k);
                sum += v;
                EXPECT_EQ(v == 0.0, expect[r][k] == 0.0);
                EXPECT_NEAR(v, expect[r][k], 1e-12);
            }
            EXPECT_NEAR(sum, 1.0, 1e-9);
        }
    }
}

TEST(Assignment, GradientReachesMapperThroughPooling) {
    Rng rng(10);
    ParamBundle p;
    p.add("map", random_array(Shape{3, 3}, rng));
    const DenseArray e = random_array(Shape{8, 3}, rng, -1.5, 1.5);
    const DenseArray x = random_array(Shape{8, 2}, rng);
    const DenseArray wsum = random_array(Shape{3, 2}, rng);
    // Low threshold so that several entries per row survive and carry gradient.
    auto build = [&](Tape& t) {
        const Var s = build_assignment(t.constant(e), t.param(p, "map"), 0.2);
        return ops::sum(ops::mul(pool_supergrids(t.constant(x), s), t.constant(wsum)));
    };
    const auto res = check_bundle(p, build);
    EXPECT_LT(res.max_rel_error, kGradTol) << res.worst;
    double total = 0;
    for (double g : p.grad("map").data()) total += std::abs(g);
    EXPECT_GT(total, 0.0);
}

TEST(Pool, OneHotAndConstantCases) {
    Tape t;
    const DenseArray s = DenseArray::matrix(4, 2, {1, 0, 0, 1, 1, 0, 1, 0});
    const DenseArray x = DenseArray::matrix(4, 2, {1, 2, 3, 4, 5, 6, 7, 8});
    const Var z = pool_supergrids(t.constant(x), t.constant(s));
    EXPECT_EQ(z.value(), DenseArray::matrix(2, 2, {13, 16, 3, 4}));

    Rng rng(12);
    const Matrix sm = random_stochastic(6, 3, rng);
    DenseArray xc(Shape{2, 3, 2});
    for (std::size_t i = 0; i < xc.size(); ++i) xc[i] = i % 2 ? -0.5 : 2.0;
    const Var zc = pool_supergrids(t.constant(xc), t.constant(to_array(sm)));
    for (std::size_t k = 0; k < 3; ++k) {
        double col = 0;
        for (std::size_t r = 0; r < 6; ++r) col += sm[r][k];
        EXPECT_NEAR(zc.value()(k, 0), 2.0 * col, 1e-12);
        EXPECT_NEAR(zc.value()(k, 1), -0.5 * col, 1e-12);
    }
}

TEST(Pool, LinearAndMatchesLoop) {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix s = random_stochastic(9, 4, rng), x = random_matrix(9, 3, rng), y = random_matrix(9, 3, rng);
        Tape t;
        const Var sv = t.constant(to_array(s));
        const Var zx = pool_supergrids(t.constant(to_array(x)), sv);
        EXPECT_LT(max_diff(to_matrix(zx.value()), pool_oracle(s, x)), 1e-12);
        const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
        Matrix comb = x;
        for (std::size_t i = 0; i < 9; ++i)
            for (std::size_t j = 0; j < 3; ++j) comb[i][j] = a * x[i][j] + b * y[i][j];
        const Var zc = pool_supergrids(t.constant(to_array(comb)), sv);
        const Var zy = pool_supergrids(t.constant(to_array(y)), sv);
        for (std::size_t i = 0; i < zc.size(); ++i)
            EXPECT_NEAR(zc.value()[i], a * zx.value()[i] + b * zy.value()[i], 1e-9);
    }
}

TEST(Assignment, LabelMapTakesFirstMaximum) {
    const auto labels = label_map(DenseArray::matrix(3, 3, {0.2, 0.5, 0.3, 0.5, 0.5, 0.0, 0.1, 0.1, 0.8}));
    EXPECT_EQ(labels, (std::vector<int>{1, 0, 2}));
}

// ---------------------------------------------------------------------------
// Implicit correlations

TEST(EdgeRepresentations, IdenticalRowsAndConstructedWeights) {
    ParamBundle p;
    add_edge_encoder(p, "e", 3, 3, 1);
    Tape t;
    const Var z_same = t.constant(DenseArray::matrix(3, 3, {1, -2, 3, 1, -2, 3, 1, -2, 3}));
    const Var c = edge_representations(t, p, "e", z_same);
    for (std::size_t r = 1; r < 9; ++r)
        for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(c.value()(r, f), c.value()(0, f));

    // First layer [I; I], second layer I, zero biases: c_ij = ReLU(Z_i + Z_j).
    auto& w1 = p.value("e.mlp.l1.w");
    auto& w2 = p.value("e.mlp.l2.w");
    w1.fill(0.0);
    w2.fill(0.0);
    for (std::size_t i = 0; i < 3; ++i) {
        w1(i, i) = 1.0;
        w1(3 + i, i) = 1.0;
        w2(i, i) = 1.0;
    }
    Tape t2;
    const Matrix z = {{1, -2, 0.5}, {-3, 1, 0.25}, {0.5, 0.5, -1}};
    const Var c2 = edge_representations(t2, p, "e", t2.constant(to_array(z)));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t f = 0; f < 3; ++f) EXPECT_DOUBLE_EQ(c2.value()(i * 3 + j, f), std::max(0.0, z[i][f] + z[j][f]));
}

TEST(EdgeRepresentations, MatchesPairLoopAndIsDirectional) {
    ParamBundle p;
    add_edge_encoder(p, "e", 4, 5, 3);
    Rng rng(14);
    for (auto& [n, e] : p) {
        if (n.ends_with(".b"))
            for (auto& v : e.value.data()) v = rng.uniform(-0.3, 0.3);
    }
    const Matrix z = random_matrix(4, 4, rng);
    Tape t;
    const Var c = edge_representations(t, p, "e", t.constant(to_array(z)));
    const Matrix w1 = to_matrix(p.value("e.mlp.l1.w")), w2 = to_matrix(p.value("e.mlp.l2.w"));
    const auto& b1 = p.value("e.mlp.l1.b");
    const auto& b2 = p.value("e.mlp.l2.b");
    bool directional = false;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            std::vector<double> in(z[i]);
            in.insert(in.end(), z[j].begin(), z[j].end());
            std::vector<double> hdn(4);
            for (std::size_t o = 0; o < 4; ++o) {
                double a = b1[o];
                for (std::size_t k = 0; k < 8; ++k) a += in[k] * w1[k][o];
                hdn[o] = std::max(0.0, a);
            }
            for (std::size_t o = 0; o < 5; ++o) {
                double a = b2[o];
                for (std::size_t k = 0; k < 4; ++k) a += hdn[k] * w2[k][o];
                EXPECT_NEAR(c.value()(i * 4 + j, o), std::max(0.0, a), 1e-12);
                if (std::abs(c.value()(i * 4 + j, o) - c.value()(j * 4 + i, o)) > 1e-9) directional = true;
            }
        }
    EXPECT_TRUE(directional);
    EXPECT_THROW(edge_representations(t, p, "e", t.constant(DenseArray(Shape{1, 4}))), GraphError);
}

TEST(EdgeWeights, ZeroKernelGivesHalfAndSharedParams) {
    ParamBundle p;
    add_edge_scorer(p, "s", 3, 1);
    Rng rng(15);
    Matrix c = random_matrix(9, 3, rng);
    c[7] = c[2];
    Tape t;
    const Var q = edge_weights(t, p, "s", t.constant(to_array(c)));
    EXPECT_EQ(q.shape(), (Shape{3, 3}));
    EXPECT_EQ(q.value()[7], q.value()[2]);
    for (double v : q.value().data()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    p.value("s.w").fill(0.0);
    Tape t2;
    const Var q0 = edge_weights(t2, p, "s", t2.constant(to_array(c)));
    for (double v : q0.value().data()) EXPECT_EQ(v, 0.5);
}

TEST(EdgeWeights, GradientOnKernel) {
    ParamBundle p;
    add_edge_scorer(p, "s", 4, 2);
    Rng rng(16);
    const DenseArray c = random_array(Shape{9, 4}, rng);
    const DenseArray wsum = random_array(Shape{3, 3}, rng);
    const auto res = check_bundle(p, [&](Tape& t) {
        return ops::sum(ops::mul(edge_weights(t, p, "s", t.constant(c)), t.constant(wsum)));
    });
    EXPECT_LT(res.max_rel_error, kGradTol) << res.worst;
}

TEST(TopK, KeepsKOutgoingEdges) {
    Rng rng(17);
    const DenseArray q = random_array(Shape{4, 4}, rng, 0.01, 0.99);
    const auto bin = sparsify_topk(q, 3, false);
    const auto wtd = sparsify_topk(q, 3, true);
    for (std::size_t i = 0; i < 4; ++i) {
        std::size_t nz = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            if (bin(i, j) != 0.0) {
                ++nz;
                EXPECT_EQ(bin(i, j), 1.0);
                EXPECT_EQ(wtd(i, j), q(i, j));
            }
        }
        EXPECT_EQ(nz, 3u);
        EXPECT_EQ(bin(i, i), 0.0);
    }
    EXPECT_THROW(sparsify_topk(q, 4, false), ConfigError);
}

TEST(TopK, MatchesSortOracleWithTies) {
    Rng rng(18);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 3 + rng.index(6), k = 1 + rng.index(n - 1);
        DenseArray q(Shape{n, n});
        // Values on a coarse lattice so ties occur.
        for (auto& v : q.data()) v = 0.1 * double(1 + rng.index(5));
        const auto got = topk_mask(q, k);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<std::pair<double, std::size_t>> cand;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) cand.push_back({-q(i, j), j});
            std::sort(cand.begin(), cand.end());
            std::vector<double> expect(n, 0.0);
            for (std::size_t r = 0; r < k; ++r) expect[cand[r].second] = 1.0;
            for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(got(i, j), expect[j]);
        }
    }
}

// ---------------------------------------------------------------------------
// Message passing

TEST(Aggregate, SmallCasesAndLoopOracle) {
    Tape t;
    const DenseArray c = DenseArray::matrix(4, 2, {9, 9, 1, 2, 3, 4, 9, 9});
    const DenseArray q = DenseArray::matrix(2, 2, {0.7, 0.25, 0.5, 0.7});
    const Var r = aggregate(t.constant(c), t.constant(q));
    EXPECT_EQ(r.value(), DenseArray::matrix(2, 2, {0.25, 0.5, 1.5, 2.0}));
    const Var r0 = aggregate(t.constant(c), t.constant(DenseArray(Shape{2, 2}, 0.0)));
    for (double v : r0.value().data()) EXPECT_EQ(v, 0.0);

    Rng rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng.index(5);
        const Matrix cm = random_matrix(n * n, 3, rng), qm = random_matrix(n, n, rng, 0, 1);
        const Var rr = aggregate(t.constant(to_array(cm)), t.constant(to_array(qm)));
        EXPECT_LT(max_diff(to_matrix(rr.value()), aggregate_oracle(cm, qm)), 1e-12);
    }
}

TEST(UpdateSupergrids, ConstructedWeightsEquivarianceAndGradient) {
    ParamBundle p;
    add_supergrid_updater(p, "u", 3, 2, 4);
    Rng rng(20);
    const Matrix z = random_matrix(4, 3, rng);
    // Zero the rows of the first layer that read the message half: with r = 0 the output
    // only depends on Z through the two affine maps.
    auto& w1 = p.value("u.mlp.l1.w");
    for (std::size_t k = 3; k < 5; ++k)
        for (std::size_t o = 0; o < 3; ++o) w1(k, o) = 0.0;
    Tape t;
    const Var out = update_supergrids(t, p, "u", t.constant(to_array(z)), t.constant(DenseArray(Shape{4, 2}, 0.0)));
    const Matrix w1m = to_matrix(w1);
    const Matrix h = matmul_loop(z, Matrix(w1m.begin(), w1m.begin() + 3));
    Matrix hr = h;
    for (auto& row : hr)
        for (auto& v : row) v = std::max(0.0, v);
    const Matrix expect = matmul_loop(hr, to_matrix(p.value("u.mlp.l2.w")));
    EXPECT_LT(max_diff(to_matrix(out.value()), expect), 1e-12);

    // Permuting supergrids permutes the output rows.
    const Matrix r = random_matrix(4, 2, rng);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    Matrix zp(4), rp(4);
    for (std::size_t i = 0; i < 4; ++i) {
        zp[i] = z[perm[i]];
        rp[i] = r[perm[i]];
    }
    const Var a = update_supergrids(t, p, "u", t.constant(to_array(z)), t.constant(to_array(r)));
    const Var b = update_supergrids(t, p, "u", t.constant(to_array(zp)), t.constant(to_array(rp)));
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(b.value()(i, f), a.value()(perm[i], f));

    ParamBundle g;
    add_supergrid_updater(g, "u", 3, 2, 5);
    const DenseArray zz = random_array(Shape{4, 3}, rng), rr = random_array(Shape{4, 2}, rng);
    const auto res = check_bundle(g, [&](Tape& tt) {
        return ops::sum(ops::abs(update_supergrids(tt, g, "u", tt.constant(zz), tt.constant(rr))));
    });
    EXPECT_LT(res.max_rel_error, kGradTol) << res.worst;
}

TEST(S2G, OneHotEqualRowsAndLoopOracle) {
    Tape t;
    const DenseArray s = DenseArray::matrix(3, 2, {0, 1, 1, 0, 0, 1});
    const DenseArray z = DenseArray::matrix(2, 2, {1, 2, 3, 4});
    EXPECT_EQ(s2g_update(t.constant(s), t.constant(z)).value(), DenseArray::matrix(3, 2, {3, 4, 1, 2, 3, 4}));

    Rng rng(21);
    const Matrix sm = random_stochastic(5, 3, rng);
    const Var eq = s2g_update(t.constant(to_array(sm)), t.constant(DenseArray::matrix(3, 2, {0.5, -1, 0.5, -1, 0.5, -1})));
    for (std::size_t r = 0; r < 5; ++r) {
        EXPECT_NEAR(eq.value()(r, 0), 0.5, 1e-12);
        EXPECT_NEAR(eq.value()(r, 1), -1.0, 1e-12);
    }
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix s2 = random_stochastic(7, 4, rng), z2 = random_matrix(4, 3, rng);
        const Var x = s2g_update(t.constant(to_array(s2)), t.constant(to_array(z2)));
        EXPECT_LT(max_diff(to_matrix(x.value()), s2g_oracle(s2, z2)), 1e-12);
    }
}

TEST(GUpdate, ZeroInputGivesZeroOutput) {
    ParamBundle p;
    add_grid_update(p, "g", 6, 2, 1);
    ops::BatchNormState bn(2);
    Tape t;
    const Var zero = t.constant(DenseArray(Shape{4, 5, 2}, 0.0));
    const Var out = g_update(t, p, "g", {zero, zero, zero}, bn, true);
    EXPECT_EQ(out.shape(), (Shape{4, 5, 2}));
    for (double v : out.value().data()) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(g_update(t, p, "g", {zero, t.constant(DenseArray(Shape{3, 5, 2}))}, bn, true), DimensionError);
}

TEST(GUpdate, ConvolutionTranslatesInterior) {
    ParamBundle p;
    add_grid_update(p, "g", 3, 2, 2);
    Rng rng(22);
    const DenseArray x = random_array(Shape{6, 6, 3}, rng);
    DenseArray shifted(Shape{6, 6, 3}, 0.0);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            for (std::size_t c = 0; c < 3; ++c) shifted[((i + 1) * 6 + j + 1) * 3 + c] = x[(i * 6 + j) * 3 + c];
    Tape t;
    const Var k = t.param(p, "g.c1.k"), b = t.param(p, "g.c1.b");
    const Var a1 = ops::conv2d_3x3(t.constant(x), k, b), a2 = ops::conv2d_3x3(t.constant(shifted), k, b);
    // Output at (i, j) depends on inputs (i-1..i+1, j-1..j+1); compare where both windows are unclipped.
    for (std::size_t i = 1; i < 4; ++i)
        for (std::size_t j = 1; j < 4; ++j)
            for (std::size_t o = 0; o < 2; ++o)
                EXPECT_NEAR(a2.value()[((i + 1) * 6 + j + 1) * 2 + o], a1.value()[(i * 6 + j) * 2 + o], 1e-12);
}

TEST(GUpdate, GradientOverKernels) {
    ParamBundle p;
    add_grid_update(p, "g", 4, 3, 3);
    Rng rng(23);
    const DenseArray a = random_array(Shape{4, 4, 2}, rng), b = random_array(Shape{4, 4, 2}, rng);
    const DenseArray wsum = random_array(Shape{4, 4, 3}, rng);
    ops::BatchNormState bn(3);
    const auto res = check_bundle(p, [&](Tape& t) {
        const Var out = g_update(t, p, "g", {t.constant(a), t.constant(b)}, bn, true);
        return ops::sum(ops::mul(out, t.constant(wsum)));
    });
    EXPECT_LT(res.max_rel_error, kGradTol) << res.worst;
}

// ---------------------------------------------------------------------------
// Fusion, head and losses

TEST(Fuse, ConvexCombination) {
    Tape t;
    const Var a = t.constant(DenseArray(Shape{2, 2}, 1.0)), m = t.constant(DenseArray(Shape{2, 2}, 2.0));
    for (double v : fuse(a, m, 0.3).value().data()) EXPECT_NEAR(v, 1.7, 1e-15);
    EXPECT_EQ(fuse(a, m, 1.0).value(), a.value());
    Rng rng(24);
    const DenseArray x = random_array(Shape{3, 3}, rng), y = random_array(Shape{3, 3}, rng);
    const Var xv = t.constant(x), yv = t.constant(y);
    for (double alpha : {0.0, 0.25, 0.8}) {
        const auto f = fuse(xv, xv, alpha).value();
        for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(f[i], x[i], 1e-15);
        const auto g = fuse(xv, yv, alpha).value();
        for (std::size_t i = 0; i < g.size(); ++i) {
            EXPECT_GE(g[i], std::min(x[i], y[i]) - 1e-15);
            EXPECT_LE(g[i], std::max(x[i], y[i]) + 1e-15);
        }
    }
    EXPECT_THROW(fuse(a, m, 1.2), ConfigError);
    EXPECT_THROW(fuse(a, m, -0.1), ConfigError);
}

TEST(EstimationHead, LocalPerCell) {
    ParamBundle p;
    add_estimation_head(p, "head", 3, 1);
    Tape t;
    DenseArray x(Shape{2, 3, 3});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.2 * double(i % 3) - 0.1;
    const Var out = estimate(t, p, "head", t.constant(x));
    ASSERT_EQ(out.shape(), (Shape{6}));
    for (std::size_t c = 1; c < 6; ++c) EXPECT_EQ(out.value()[c], out.value()[0]);
    x[4 * 3 + 1] += 1.0;
    const Var out2 = estimate(t, p, "head", t.constant(x));
    for (std::size_t c = 0; c < 6; ++c) {
        if (c == 4) continue;
        EXPECT_EQ(out2.value()[c], out.value()[c]);
    }

    Rng rng(25);
    const DenseArray xr = random_array(Shape{6, 3}, rng);
    const auto res = check_bundle(p, [&](Tape& tt) { return ops::sum(ops::abs(estimate(tt, p, "head", tt.constant(xr)))); });
    EXPECT_LT(res.max_rel_error, kGradTol) << res.worst;
}

TEST(ReconLoss, IdentitiesAndOracle) {
    Tape t;
    Rng rng(26);
    const DenseArray eye = to_array({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    const DenseArray e = random_array(Shape{3, 4}, rng);
    EXPECT_NEAR(recon_loss(t.constant(eye), t.constant(eye), t.constant(e), t.constant(e), 0.6).value().item(), 0.0, 1e-15);
    const Matrix s = random_stochastic(5, 2, rng);
    const DenseArray zero(Shape{5, 3}, 0.0);
    EXPECT_EQ(recon_loss(t.constant(to_array(s)), t.constant(to_array(s)), t.constant(zero), t.constant(zero), 0.5).value().item(), 0.0);

    for (int trial = 0; trial < 10; ++trial) {
        const Matrix sd = random_stochastic(6, 3, rng), ss = random_stochastic(6, 2, rng);
        const Matrix ed = random_matrix(6, 4, rng), es = random_matrix(6, 4, rng);
        const double beta = rng.uniform();
        auto resid = [](const Matrix& sm, const Matrix& em) {
            Matrix st(sm[0].size(), std::vector<double>(sm.size()));
            for (std::size_t i = 0; i < sm.size(); ++i)
                for (std::size_t k = 0; k < sm[0].size(); ++k) st[k][i] = sm[i][k];
            const Matrix proj = matmul_loop(matmul_loop(sm, st), em);
            double ss2 = 0;
            for (std::size_t i = 0; i < em.size(); ++i)
                for (std::size_t j = 0; j < em[0].size(); ++j) ss2 += (proj[i][j] - em[i][j]) * (proj[i][j] - em[i][j]);
            return std::sqrt(ss2);
        };
        const double expect = beta * resid(sd, ed) + (1 - beta) * resid(ss, es);
        const double got = recon_loss(t.constant(to_array(sd)), t.constant(to_array(ss)), t.constant(to_array(ed)),
                                      t.constant(to_array(es)), beta).value().item();
        EXPECT_NEAR(got, expect, 1e-12);
        EXPECT_GT(got, 0.0);
    }
}

TEST(EstLoss, HandArithmeticAndLocality) {
    Tape t;
    const Var est = t.constant(DenseArray(Shape{4}, std::vector<double>{12, 99, 16, -5}));
    EXPECT_DOUBLE_EQ(est_loss(est, {10, 20}, {0, 2}).value().item(), 3.0);
    EXPECT_DOUBLE_EQ(est_loss(est, {12, 16}, {0, 2}).value().item(), 0.0);
    const Var est2 = t.constant(DenseArray(Shape{4}, std::vector<double>{12, -40, 16, 1e6}));
    EXPECT_DOUBLE_EQ(est_loss(est2, {10, 20}, {0, 2}).value().item(), 3.0);
    EXPECT_THROW(est_loss(est, {}, {}), ProtocolError);

    Rng rng(27);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> e(10), truth;
        for (auto& v : e) v = rng.uniform(-5, 5);
        std::vector<std::size_t> targets{1, 4, 7};
        for (std::size_t i = 0; i < 3; ++i) truth.push_back(rng.uniform(-5, 5));
        const Var ev = t.constant(DenseArray(Shape{10}, e));
        EXPECT_NEAR(est_loss(ev, truth, targets).value().item(), est_loss_oracle(e, truth, targets), 1e-12);
    }
}

TEST(JointLoss, WeightsAndMonotonicity) {
    Tape t;
    const Var est = t.constant(DenseArray::scalar(2.0)), rec = t.constant(DenseArray::scalar(1.0));
    EXPECT_DOUBLE_EQ(joint_loss(est, rec, 1.0).value().item(), 2.0);
    EXPECT_DOUBLE_EQ(joint_loss(est, rec, 0.0).value().item(), 1.0);
    EXPECT_NEAR(joint_loss(est, rec, 0.6).value().item(), 1.6, 1e-15);
    for (double lam : {0.2, 0.5, 0.9})
        for (double e = 0; e < 3; e += 0.5) {
            EXPECT_LE(joint_loss_value(e, 1.0, lam), joint_loss_value(e + 0.1, 1.0, lam));
            EXPECT_LE(joint_loss_value(1.0, e, lam), joint_loss_value(1.0, e + 0.1, lam));
        }
    EXPECT_THROW(joint_loss(est, rec, 1.5), ConfigError);
}

TEST(Mae, PerfectSingleSampleAndOracle) {
    EXPECT_EQ(mae_metric({{1, 2}, {3, 4}}, {{1, 2}, {3, 4}}), 0.0);
    Tape t;
    const Var est = t.constant(DenseArray(Shape{4}, std::vector<double>{12, 99, 16, -5}));
    EXPECT_DOUBLE_EQ(mae_metric({{12, 16}}, {{10, 20}}), est_loss(est, {10, 20}, {0, 2}).value().item());
    Rng rng(28);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix e = random_matrix(5, 4, rng), tr = random_matrix(5, 4, rng);
        EXPECT_NEAR(mae_metric(e, tr), mae_oracle(e, tr), 1e-12);
    }
    EXPECT_THROW(mae_metric({}, {}), ProtocolError);
    EXPECT_THROW(mae_metric({{}}, {{}}), ProtocolError);
}
