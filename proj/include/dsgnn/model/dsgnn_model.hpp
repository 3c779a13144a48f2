#pragma once

// Full dual-view model: temporal encoders, dynamic and static supergrids, graph message
// passing, grid update, fusion and the estimation head.

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dsgnn/data/grid_dataset.hpp"
#include "dsgnn/model/correlation.hpp"
#include "dsgnn/model/fusion_loss.hpp"
#include "dsgnn/model/message_passing.hpp"
#include "dsgnn/model/supergrid.hpp"
#include "dsgnn/model/temporal_encoder.hpp"
#include "dsgnn/model/variant.hpp"

namespace dsgnn {

enum class View { Aod = 0, Met = 1 };

inline const char* view_prefix(View v) { return v == View::Aod ? "aod" : "met"; }

/// Feature channels per time step: the view's own channels plus the six air-quality channels.
inline std::size_t init_channels(View v) {
    return (v == View::Aod ? kAodChannelCount : kMeteorologyChannelCount) + kAirQualityChannelCount;
}
inline std::size_t dynamic_channels(View v) { return v == View::Aod ? kAodChannelCount : kMeteorologyChannelCount; }

struct ModelConfig {
    std::size_t height = 24;
    std::size_t width = 24;
    std::size_t d = 32;  // representation width; attention, hidden and edge widths follow it
    std::size_t tau = 6;
    std::size_t n_dyn = 5;
    std::size_t n_sta = 8;
    double rho = 0.4;
    double alpha = 0.3;
    double beta = 0.6;
    double gamma = 0.4;
    double lambda = 0.6;
    Ablation ablation;

    std::size_t cells() const { return height * width; }

    void validate() const {
        if (height == 0 || width == 0) throw ConfigError("model: grid must be non-empty");
        if (d == 0) throw ConfigError("model: d must be >= 1");
        if (tau == 0) throw ConfigError("tau must be >= 1");
        check_rho(rho);
        check_unit_weight(alpha, "alpha");
        check_unit_weight(beta, "beta");
        check_unit_weight(gamma, "gamma");
        check_unit_weight(lambda, "lambda");
        if (!ablation.cnn_only) {
            if (ablation.dynamic_branch && n_dyn < 2) throw ConfigError("n_dyn must be >= 2, got " + std::to_string(n_dyn));
            if (ablation.static_branch && n_sta < 2) throw ConfigError("n_sta must be >= 2, got " + std::to_string(n_sta));
            if (ablation.graph == GraphMode::TopKBinary || ablation.graph == GraphMode::TopKWeighted) {
                const std::size_t smallest = std::min(ablation.dynamic_branch ? n_dyn : n_sta, ablation.static_branch ? n_sta : n_dyn);
                if (ablation.topk < 1 || ablation.topk >= smallest) {
                    throw ConfigError("topk=" + std::to_string(ablation.topk) + " must be in [1, " +
                                      std::to_string(smallest - 1) + "] for the configured supergrid counts");
                }
            }
        }
    }
};

/// Inputs of one sample, already normalized. Sequences are [cells, tau, channels].
struct SampleInputs {
    std::array<DenseArray, 2> init_seq;  // indexed by View
    std::array<DenseArray, 2> dyn_seq;
};

struct BranchTrace {
    Var assignment;  // [cells, N]
    Var pooled;      // [N, d]
    Var edges;       // [N*N, d]
    Var weights;     // [N, N] as used by aggregation
    Var messages;    // [N, d]
    Var updated;     // [N, d]
    Var projected;   // [cells, d]
};

struct ViewTrace {
    Var initial;  // [cells, d]
    Var semantics_dyn;
    std::optional<BranchTrace> dyn, sta;
    Var pre_norm;  // [H, W, d], first grid-update convolution
    Var output;    // [H, W, d]
    std::optional<Var> recon;
};

struct ForwardResult {
    std::array<ViewTrace, 2> views;
    Var fused;       // [H, W, d]
    Var raw_output;  // [cells], normalized units
    Var estimate;    // [cells], original pollutant units
    std::optional<Var> recon;
};

class DsgnnModel {
public:
    DsgnnModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {
        cfg_.validate();
        const std::size_t d = cfg_.d;
        for (View v : {View::Aod, View::Met}) {
            const std::string vp = view_prefix(v);
            add_temporal_encoder(params_, vp + ".te_init", {init_channels(v), cfg_.tau, d, d, d}, seed_);
            add_temporal_encoder(params_, vp + ".te_dyn", {dynamic_channels(v), cfg_.tau, d, d, d}, seed_);
            for (const char* kind : {"dyn", "sta"}) {
                const std::string bp = vp + "." + kind;
                const std::size_t n = std::string(kind) == "dyn" ? cfg_.n_dyn : cfg_.n_sta;
                if (cfg_.ablation.low_rank) add_weight(params_, bp + ".map", Shape{d, n}, d, n, seed_);
                else add_weight(params_, bp + ".logits", Shape{cfg_.cells(), n}, d, n, seed_);
                add_edge_encoder(params_, bp + ".edge", d, d, seed_);
                add_edge_scorer(params_, bp + ".score", d, seed_);
                add_supergrid_updater(params_, bp + ".upd", d, d, seed_);
                // Pooled features are sums over many cells; a zero output layer lets the
                // branch start silent instead of swamping the grid update.
                params_.value(bp + ".upd.mlp.l2.w").fill(0.0);
            }
            const bool aod = v == View::Aod;
            add_grid_update(params_, vp + ".g", d * (1 + cfg_.ablation.active_branches(aod)), d, seed_);
            bn_[static_cast<int>(v)] = BatchNormState(d);
            static_[static_cast<int>(v)] = DenseArray(Shape{cfg_.cells(), d}, 0.0);
        }
        add_estimation_head(params_, "head", d, seed_);
    }

    const ModelConfig& config() const noexcept { return cfg_; }
    std::uint64_t seed() const noexcept { return seed_; }
    ParamBundle& params() noexcept { return params_; }
    const ParamBundle& params() const noexcept { return params_; }
    BatchNormState& bn(View v) { return bn_[static_cast<int>(v)]; }
    const BatchNormState& bn(View v) const { return bn_[static_cast<int>(v)]; }

    /// Static semantic embedding [cells, d] of a view (held constant during training).
    void set_static_semantics(View v, DenseArray e) {
        if (e.shape() != Shape{cfg_.cells(), cfg_.d}) {
            throw DimensionError("static semantics must be " + shape_string(Shape{cfg_.cells(), cfg_.d}) + ", got " +
                                 shape_string(e.shape()));
        }
        static_[static_cast<int>(v)] = std::move(e);
    }
    const DenseArray& static_semantics(View v) const { return static_[static_cast<int>(v)]; }

    /// The head predicts normalized values; estimates are out * scale + offset.
    void set_output_transform(double offset, double scale) {
        out_offset_ = offset;
        out_scale_ = scale;
    }
    double output_offset() const noexcept { return out_offset_; }
    double output_scale() const noexcept { return out_scale_; }

    /// Optional observer of every forward input, used by leakage tests.
    std::function<void(const SampleInputs&)> input_hook;

    /// When set, every edge weight of every branch is this constant. Used to check graph
    /// ablations against manual runs.
    std::optional<double> weight_override;

    /// Forward pass over a batch. Batch norm statistics in training mode pool all samples;
    /// everything else is per sample.
    std::vector<ForwardResult> forward_batch(Tape& t, const std::vector<SampleInputs>& batch, bool training) {
        if (batch.empty()) throw ContractError("forward_batch: empty batch");
        if (input_hook)
            for (const auto& in : batch) input_hook(in);
        std::vector<ForwardResult> res(batch.size());
        for (View v : {View::Aod, View::Met}) {
            const int vi = static_cast<int>(v);
            const std::string gp = std::string(view_prefix(v)) + ".g";
            std::vector<Var> pre;
            for (std::size_t b = 0; b < batch.size(); ++b) {
                res[b].views[vi] = forward_view(t, batch[b], v);
                pre.push_back(res[b].views[vi].pre_norm);
            }
            const auto normed = batch_norm_samples(pre, t.param(params_, gp + ".bn.gamma"),
                                                   t.param(params_, gp + ".bn.beta"), bn_[vi], training);
            for (std::size_t b = 0; b < batch.size(); ++b) res[b].views[vi].output = g_update_tail(t, params_, gp, normed[b]);
        }
        for (auto& r : res) {
            const auto& ra = r.views[0].recon;
            const auto& rm = r.views[1].recon;
            if (ra && rm) r.recon = combine_recon(*ra, *rm, cfg_.gamma);
            else if (ra) r.recon = ops::scale(*ra, cfg_.gamma);
            else if (rm) r.recon = ops::scale(*rm, 1.0 - cfg_.gamma);
            r.fused = fuse(r.views[0].output, r.views[1].output, cfg_.alpha);
            r.raw_output = estimate(t, params_, "head", r.fused);
            r.estimate = add_constant(ops::scale(r.raw_output, out_scale_), out_offset_);
        }
        return res;
    }

    ForwardResult forward(Tape& t, const SampleInputs& in, bool training) {
        return std::move(forward_batch(t, {in}, training).front());
    }

    /// Joint objective for one sample; the reconstruction part is absent when no
    /// supergrid branch is active.
    Var loss(const ForwardResult& r, const std::vector<double>& truth, const std::vector<std::size_t>& targets) const {
        const Var est = est_loss(r.estimate, truth, targets);
        if (!r.recon) return ops::scale(est, cfg_.lambda);
        return joint_loss(est, *r.recon, cfg_.lambda);
    }

private:
    Var assignment(Tape& t, const std::string& bp, const Var& embedding) {
        const auto& a = cfg_.ablation;
        if (a.low_rank) return build_assignment(embedding, t.param(params_, bp + ".map"), cfg_.rho, a.threshold);
        return assignment_from_logits(t.param(params_, bp + ".logits"), cfg_.rho, a.threshold);
    }

    BranchTrace branch(Tape& t, const std::string& bp, const Var& x, const Var& embedding) {
        BranchTrace b;
        b.assignment = assignment(t, bp, embedding);
        b.pooled = pool_supergrids(x, b.assignment);
        b.edges = edge_representations(t, params_, bp + ".edge", b.pooled);
        const std::size_t n = b.pooled.shape()[0];
        if (weight_override) b.weights = t.constant(DenseArray(Shape{n, n}, *weight_override));
        else switch (cfg_.ablation.graph) {
        case GraphMode::Weighted:
            b.weights = edge_weights(t, params_, bp + ".score", b.edges);
            break;
        case GraphMode::TopKBinary:
            b.weights = t.constant(sparsify_topk(edge_weights(t, params_, bp + ".score", b.edges).value(),
                                                 cfg_.ablation.topk, false));
            break;
        case GraphMode::TopKWeighted: {
            const Var q = edge_weights(t, params_, bp + ".score", b.edges);
            b.weights = ops::mul(q, t.constant(topk_mask(q.value(), cfg_.ablation.topk)));
            break;
        }
        case GraphMode::AllOnes:
            b.weights = t.constant(DenseArray(Shape{n, n}, 1.0));
            break;
        }
        b.messages = aggregate(b.edges, b.weights);
        b.updated = update_supergrids(t, params_, bp + ".upd", b.pooled, b.messages);
        b.projected = s2g_update(b.assignment, b.updated);
        return b;
    }

    ViewTrace forward_view(Tape& t, const SampleInputs& in, View v) {
        const int vi = static_cast<int>(v);
        const std::string vp = view_prefix(v);
        const auto& a = cfg_.ablation;
        const std::size_t h = cfg_.height, w = cfg_.width, d = cfg_.d;
        check_sequence(in.init_seq[vi], init_channels(v), "initial");
        ViewTrace tr;
        tr.initial = encode_cells(t, params_, vp + ".te_init", t.constant(in.init_seq[vi]));
        std::vector<Var> blocks;
        auto grid = [&](const Var& x) { return ops::reshape(x, Shape{h, w, d}); };
        if (a.view_has_supergrids(v == View::Aod)) {
            std::optional<Var> rd, rs;
            if (a.dynamic_branch) {
                check_sequence(in.dyn_seq[vi], dynamic_channels(v), "dynamic");
                tr.semantics_dyn = encode_cells(t, params_, vp + ".te_dyn", t.constant(in.dyn_seq[vi]));
                tr.dyn = branch(t, vp + ".dyn", tr.initial, tr.semantics_dyn);
                blocks.push_back(grid(tr.dyn->projected));
                rd = ops::scale(projection_residual(tr.dyn->assignment, tr.semantics_dyn), cfg_.beta);
            }
            if (a.static_branch) {
                const Var e_sta = t.constant(static_[vi]);
                tr.sta = branch(t, vp + ".sta", tr.initial, e_sta);
                blocks.push_back(grid(tr.sta->projected));
                rs = ops::scale(projection_residual(tr.sta->assignment, e_sta), 1.0 - cfg_.beta);
            }
            tr.recon = rd && rs ? ops::add(*rd, *rs) : (rd ? *rd : *rs);
        }
        blocks.push_back(grid(tr.initial));
        tr.pre_norm = g_update_conv1(t, params_, vp + ".g", blocks);
        return tr;
    }

    void check_sequence(const DenseArray& s, std::size_t channels, const char* what) const {
        const Shape want{cfg_.cells(), cfg_.tau, channels};
        if (s.shape() != want) {
            throw DimensionError(std::string("forward: ") + what + " sequence must be " + shape_string(want) + ", got " +
                                 shape_string(s.shape()));
        }
    }

    ModelConfig cfg_;
    std::uint64_t seed_;
    ParamBundle params_;
    std::array<BatchNormState, 2> bn_;
    std::array<DenseArray, 2> static_;
    double out_offset_ = 0.0;
    double out_scale_ = 1.0;
};

} // namespace dsgnn
