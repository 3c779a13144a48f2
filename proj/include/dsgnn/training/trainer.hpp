#pragma once

// Masked-station training: one model per fold, Adam over shuffled window batches,
// epoch selection on validation MAE, test MAE of the selected epoch.

#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>

#include "dsgnn/numerics/adam.hpp"
#include "dsgnn/training/config.hpp"
#include "dsgnn/training/fold_data.hpp"

namespace dsgnn {

/// Static embeddings of both views, factorized once from the training split.
struct StaticContext {
    std::array<std::optional<StaticSemantics>, 2> views;
};

inline StaticContext make_static_context(const SharedInputs& shared, const TrainConfig& cfg) {
    StaticContext ctx;
    const Ablation a = cfg.ablation();
    FactorizeOptions fo;
    fo.iters = cfg.mf_iters;
    fo.lr = cfg.mf_lr;
    for (View v : {View::Aod, View::Met}) {
        if (!a.static_branch || !a.view_has_supergrids(v == View::Aod)) continue;
        ctx.views[static_cast<int>(v)] =
            factorize_static(shared.static_matrix(v), cfg.d, derive_seed(cfg.seed, 101 + static_cast<int>(v)), fo);
    }
    return ctx;
}

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double joint = 0.0, est = 0.0, recon = 0.0;  // means over training samples
    double val_mae = 0.0;
};

struct FoldResult {
    std::size_t fold_id = 0;
    double init_test_mae = 0.0;
    double test_mae = 0.0;
    double best_val_mae = 0.0;
    std::size_t best_epoch = 0;  // 0 = initial parameters
    std::size_t epochs_run = 0;
    std::vector<EpochStats> curve;
    std::shared_ptr<DsgnnModel> model;  // parameters of the selected epoch
};

struct TrainHooks {
    std::function<void(const SampleInputs&)> input_hook;
    std::function<void(DsgnnModel&)> configure_model;
    std::function<void(const std::string&)> log;
};

/// Estimates [cells] in pollutant units for the window ending at t_end.
inline std::vector<double> predict(DsgnnModel& model, const FoldInputs& data, std::size_t t_end) {
    Tape t(false);
    const ForwardResult r = model.forward(t, data.sample(t_end, model.config().tau), false);
    const auto& v = r.estimate.value();
    return std::vector<double>(v.data().begin(), v.data().end());
}

/// MAE over target cells of the given windows, in evaluation mode.
inline double evaluate_mae(DsgnnModel& model, const FoldInputs& data, const std::vector<std::size_t>& windows) {
    std::vector<std::vector<double>> est, truth;
    for (auto t_end : windows) {
        const auto all = predict(model, data, t_end);
        std::vector<double> at_targets;
        for (auto c : data.fold.target_cells) at_targets.push_back(all[c]);
        est.push_back(std::move(at_targets));
        truth.push_back(data.truth[t_end]);
    }
    return mae_metric(est, truth);
}

inline std::shared_ptr<DsgnnModel> make_fold_model(const FoldInputs& data, const StaticContext& st, const TrainConfig& cfg) {
    const SharedInputs& sh = *data.shared;
    auto model = std::make_shared<DsgnnModel>(cfg.model_config(sh.height, sh.width),
                                              derive_seed(cfg.seed, 1 + data.fold.fold_id));
    for (View v : {View::Aod, View::Met})
        if (const auto& s = st.views[static_cast<int>(v)]) model->set_static_semantics(v, s->embedding);
    model->set_output_transform(data.output_offset(), data.output_scale());
    return model;
}

namespace detail {

inline void check_finite(double value, const char* term, std::size_t epoch, std::size_t batch, std::size_t t_end) {
    if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                            " (window ending at t=" + std::to_string(t_end) + "): term '" + term +
                            "' = " + std::to_string(value));
    }
}

} // namespace detail

inline FoldResult train_fold(const FoldInputs& data, const StaticContext& st, const TrainConfig& cfg,
                             const TrainHooks& hooks = {}) {
    cfg.validate();
    const TimeSplit& split = data.shared->split;
    auto model = make_fold_model(data, st, cfg);
    if (hooks.configure_model) hooks.configure_model(*model);
    model->input_hook = hooks.input_hook;

    FoldResult res;
    res.fold_id = data.fold.fold_id;
    res.init_test_mae = evaluate_mae(*model, data, split.test);
    res.best_val_mae = evaluate_mae(*model, data, split.val);
    DsgnnModel best = *model;

    const bool frozen = cfg.lr == 0.0;
    std::optional<Adam> adam;
    if (!frozen) adam.emplace(AdamOptions{cfg.lr});
    const auto& targets = data.fold.target_cells;
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = split.train;
        Rng rng(derive_seed(model->seed(), epoch));
        rng.shuffle(order);
        const std::array<BatchNormState, 2> bn_before = {model->bn(View::Aod), model->bn(View::Met)};
        EpochStats es;
        es.epoch = epoch;
        std::size_t batch_id = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch, ++batch_id) {
            const std::size_t end = std::min(order.size(), start + cfg.batch);
            const double inv = 1.0 / static_cast<double>(end - start);
            model->params().zero_grad();
            std::vector<SampleInputs> inputs;
            for (std::size_t i = start; i < end; ++i) inputs.push_back(data.sample(order[i], cfg.tau));
            Tape t(!frozen);
            const auto results = model->forward_batch(t, inputs, true);
            std::vector<Var> losses;
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t t_end = order[i];
                const ForwardResult& r = results[i - start];
                const Var loss = model->loss(r, data.truth[t_end], targets);
                const double est = est_loss(r.estimate, data.truth[t_end], targets).value()[0];
                const double rec = r.recon ? r.recon->value()[0] : 0.0;
                detail::check_finite(est, "estimation", epoch, batch_id, t_end);
                detail::check_finite(rec, "reconstruction", epoch, batch_id, t_end);
                detail::check_finite(loss.value()[0], "joint", epoch, batch_id, t_end);
                es.joint += loss.value()[0];
                es.est += est;
                es.recon += rec;
                losses.push_back(ops::reshape(loss, Shape{1}));
            }
            if (!frozen) {
                t.backward(ops::scale(ops::sum(losses.size() == 1 ? losses[0] : ops::concat(losses, 0)), inv));
                adam->step(model->params());
            }
        }
        if (frozen) {
            model->bn(View::Aod) = bn_before[0];
            model->bn(View::Met) = bn_before[1];
        }
        const double n = static_cast<double>(order.size());
        es.joint /= n;
        es.est /= n;
        es.recon /= n;
        es.val_mae = evaluate_mae(*model, data, split.val);
        res.curve.push_back(es);
        res.epochs_run = epoch;
        if (hooks.log) {
            hooks.log("fold " + std::to_string(res.fold_id) + " epoch " + std::to_string(epoch) + " loss " +
                      std::to_string(es.joint) + " val_mae " + std::to_string(es.val_mae));
        }
        if (es.val_mae < res.best_val_mae) {
            res.best_val_mae = es.val_mae;
            res.best_epoch = epoch;
            best = *model;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    res.model = std::make_shared<DsgnnModel>(std::move(best));
    res.test_mae = evaluate_mae(*res.model, data, split.test);
    res.model->input_hook = nullptr;
    return res;
}

struct RunReport {
    std::string variant;
    TrainConfig config;
    std::vector<FoldResult> folds;
    double mean_mae = 0.0;
    double wall_seconds = 0.0;
};

/// Shared state of one protocol run on one dataset.
struct ProtocolData {
    SharedInputs shared;
    std::array<StationFold, kFoldCount> folds;
};

inline ProtocolData make_protocol_data(const GridDataset& ds, const TrainConfig& cfg) {
    ds.validate();
    return ProtocolData{make_shared_inputs(ds, cfg.tau), make_folds(ds, cfg.seed)};
}

/// Trains the configured folds, `jobs` at a time. Results do not depend on `jobs`.
inline RunReport run_protocol(const GridDataset& ds, const ProtocolData& pd, const TrainConfig& cfg, std::size_t jobs = 1,
                              const TrainHooks& hooks = {}) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const StaticContext st = make_static_context(pd.shared, cfg);
    RunReport rep;
    rep.variant = cfg.variant;
    rep.config = cfg;
    rep.folds.resize(cfg.folds.size());
    std::vector<std::exception_ptr> errors(cfg.folds.size());
    std::mutex log_mutex;
    TrainHooks h = hooks;
    if (hooks.log) {
        h.log = [&](const std::string& s) {
            std::lock_guard lock(log_mutex);
            hooks.log(s);
        };
    }
    auto work = [&](std::size_t i) {
        try {
            const FoldInputs data = make_fold_inputs(ds, pd.shared, pd.folds[cfg.folds[i]], cfg.target);
            rep.folds[i] = train_fold(data, st, cfg, h);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    jobs = std::max<std::size_t>(1, std::min(jobs, cfg.folds.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < cfg.folds.size(); ++i) work(i);
    } else {
        std::mutex next_mutex;
        std::size_t next = 0;
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j) {
            pool.emplace_back([&] {
                for (;;) {
                    std::size_t i;
                    {
                        std::lock_guard lock(next_mutex);
                        if (next == cfg.folds.size()) return;
                        i = next++;
                    }
                    work(i);
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    double sum = 0.0;
    for (const auto& f : rep.folds) sum += f.test_mae;
    rep.mean_mae = sum / static_cast<double>(rep.folds.size());
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

inline RunReport run_protocol(const GridDataset& ds, const TrainConfig& cfg, std::size_t jobs = 1,
                              const TrainHooks& hooks = {}) {
    cfg.validate();
    return run_protocol(ds, make_protocol_data(ds, cfg), cfg, jobs, hooks);
}

/// One report per variant, in the order given. All names are checked before any training.
inline std::vector<RunReport> ablation_sweep(const GridDataset& ds, const TrainConfig& cfg,
                                             const std::vector<std::string>& variants, std::size_t jobs = 1,
                                             const TrainHooks& hooks = {}) {
    if (variants.empty()) throw ConfigError("ablation sweep needs at least one variant");
    for (const auto& v : variants) parse_variant(v);
    const ProtocolData pd = make_protocol_data(ds, cfg);
    std::vector<RunReport> out;
    for (const auto& v : variants) {
        TrainConfig c = cfg;
        c.variant = v;
        out.push_back(run_protocol(ds, pd, c, jobs, hooks));
    }
    return out;
}

} // namespace dsgnn
