#pragma once

// Command-line front end: generate, train, estimate, ablate.
// Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dsgnn/data/dataset_io.hpp"
#include "dsgnn/data/synthetic.hpp"
#include "dsgnn/io/export.hpp"
#include "dsgnn/io/snapshot.hpp"
#include "dsgnn/training/report.hpp"

namespace dsgnn::cli {

using io::write_atomic;

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

inline bool verbose() {
    const char* v = std::getenv("DSGNN_VERBOSE");
    return v && *v && std::string(v) != "0";
}

inline TrainHooks verbose_hooks(std::ostream& err) {
    TrainHooks h;
    if (verbose()) h.log = [&err](const std::string& s) { err << s << '\n'; };
    return h;
}

inline GridDataset open_dataset(const std::string& path) {
    if (path.empty()) throw ConfigError("no dataset given (use --dataset or the 'dataset' config key)");
    if (!fs::exists(path)) throw ConfigError("dataset not found: " + path);
    return load_dataset(path);
}

inline void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw Error("cannot create directory " + p.string() + ": " + ec.message());
}

struct GenerateArgs {
    std::string out;
    SyntheticConfig syn;
    bool force = false;
};

inline void cmd_generate(const GenerateArgs& a, std::ostream& err) {
    const fs::path out = a.out;
    if (fs::exists(out) && !fs::is_directory(out)) throw ConfigError("--out " + a.out + " exists and is not a directory");
    if (fs::exists(out) && !fs::is_empty(out) && !a.force) {
        throw ConfigError("--out " + a.out + " is not empty; pass --force to overwrite");
    }
    std::vector<std::string> warnings;
    const GridDataset ds = gen_synthetic(a.syn, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << '\n';
    ensure_dir(out);
    save_dataset(ds, out);
    const std::vector<int> labels(ds.planted_labels->begin(), ds.planted_labels->end());
    write_atomic(out / "planted_labels.txt", label_text(labels, ds.height, ds.width));
    write_atomic(out / "planted_labels.pgm", label_pgm_text(labels, ds.height, ds.width));
}

/// Label maps and edge weights of every active branch at one window, for inspection.
inline void export_structure(const fs::path& dir, DsgnnModel& model, const FoldInputs& data, std::size_t t_end) {
    Tape t(false);
    const ForwardResult r = model.forward(t, data.sample(t_end, model.config().tau), false);
    const std::size_t h = model.config().height, w = model.config().width;
    for (View v : {View::Aod, View::Met}) {
        const auto& tr = r.views[static_cast<int>(v)];
        for (const auto& [kind, b] : {std::pair{"dyn", &tr.dyn}, std::pair{"sta", &tr.sta}}) {
            if (!b->has_value()) continue;
            const std::string stem = std::string(view_prefix(v)) + "_" + kind;
            const auto labels = label_map((*b)->assignment.value());
            write_atomic(dir / ("labels_" + stem + ".txt"), label_text(labels, h, w));
            write_atomic(dir / ("labels_" + stem + ".pgm"), label_pgm_text(labels, h, w));
            write_atomic(dir / ("q_" + stem + ".csv"), matrix_csv((*b)->weights.value()));
        }
    }
}

inline void write_run_outputs(const fs::path& out, const GridDataset& ds, const RunReport& rep) {
    ensure_dir(out);
    write_atomic(out / "report.csv", report_csv(rep));
    write_atomic(out / "loss_curve.csv", loss_curve_csv(rep));
    write_atomic(out / "summary.txt", summary_text(rep));
    const ProtocolData pd = make_protocol_data(ds, rep.config);
    for (const auto& f : rep.folds) {
        const fs::path dir = out / ("fold_" + std::to_string(f.fold_id));
        ensure_dir(dir);
        const StationFold& fold = pd.folds[f.fold_id];
        save_snapshot(dir / "params.json", *f.model, rep.config, fold);
        const FoldInputs data = make_fold_inputs(ds, pd.shared, fold, rep.config.target);
        export_structure(dir, *f.model, data, pd.shared.split.test.front());
    }
}

struct TrainArgs {
    std::string config, dataset, out, variant;
    std::size_t jobs = 1;
};

inline TrainConfig resolve_config(const std::string& config_path, const std::string& variant) {
    TrainConfig cfg = load_config(config_path);
    if (!variant.empty()) {
        try {
            set_config_value(cfg, "variant", variant);
            cfg.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("--variant: ") + e.what());
        }
    }
    return cfg;
}

inline void cmd_train(const TrainArgs& a, std::ostream& err) {
    const TrainConfig cfg = resolve_config(a.config, a.variant);
    const GridDataset ds = open_dataset(a.dataset.empty() ? cfg.dataset : a.dataset);
    const RunReport rep = run_protocol(ds, cfg, a.jobs, verbose_hooks(err));
    write_run_outputs(a.out, ds, rep);
    if (verbose()) err << summary_text(rep);
}

struct EstimateArgs {
    std::string params, dataset, out;
    long long time = -1;
};

inline void cmd_estimate(const EstimateArgs& a) {
    if (!fs::exists(a.params)) throw ConfigError("params file not found: " + a.params);
    const Snapshot snap = load_snapshot(a.params);
    const GridDataset ds = open_dataset(a.dataset.empty() ? snap.config.dataset : a.dataset);
    const ModelConfig& mc = snap.model->config();
    if (ds.height != mc.height || ds.width != mc.width) {
        throw ProtocolError("dataset grid " + std::to_string(ds.height) + "x" + std::to_string(ds.width) +
                            " does not match the trained model's " + std::to_string(mc.height) + "x" +
                            std::to_string(mc.width));
    }
    const SharedInputs shared = make_shared_inputs(ds, snap.config.tau);
    const auto& test = shared.split.test;
    if (a.time < 0 || static_cast<std::size_t>(a.time) < test.front() || static_cast<std::size_t>(a.time) > test.back()) {
        throw ProtocolError("--time " + std::to_string(a.time) + " is outside the test split [" +
                            std::to_string(test.front()) + ", " + std::to_string(test.back()) + "]");
    }
    const FoldInputs data = make_fold_inputs(ds, shared, snap.fold, snap.config.target);
    const auto est = predict(*snap.model, data, static_cast<std::size_t>(a.time));
    fs::path out = a.out;
    if (out.has_parent_path()) ensure_dir(out.parent_path());
    write_atomic(out, grid_csv(est, ds.height, ds.width));
    fs::path pgm = out;
    pgm.replace_extension(".pgm");
    write_atomic(pgm, pgm_text(est, ds.height, ds.width));
}

struct AblateArgs {
    std::string config, dataset, out, variants;
    std::size_t jobs = 1;
};

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline void cmd_ablate(const AblateArgs& a, std::ostream& err) {
    const TrainConfig cfg = load_config(a.config);
    const auto variants = split_list(a.variants);
    if (variants.empty()) throw ConfigError("--variants: empty list");
    for (const auto& v : variants) {
        try {
            parse_variant(v);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("--variants: ") + e.what());
        }
    }
    const GridDataset ds = open_dataset(a.dataset.empty() ? cfg.dataset : a.dataset);
    const auto reports = ablation_sweep(ds, cfg, variants, a.jobs, verbose_hooks(err));
    const fs::path out = a.out;
    ensure_dir(out);
    write_atomic(out / "comparison.csv", comparison_csv(reports));
    for (const auto& r : reports) {
        const fs::path dir = out / r.variant;
        ensure_dir(dir);
        write_atomic(dir / "report.csv", report_csv(r));
        write_atomic(dir / "loss_curve.csv", loss_curve_csv(r));
        write_atomic(dir / "summary.txt", summary_text(r));
    }
}

/// Parses argv and runs one command; errors go to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dual-view supergrid graph network for grid-level air-quality estimation"};
    app.set_help_flag("--help", "Print this help message and exit");
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Write a synthetic dataset with planted supergrid clusters");
    g->add_option("--out", gen.out, "Output directory")->required();
    g->add_option("--h", gen.syn.height, "Grid height")->capture_default_str();
    g->add_option("--w", gen.syn.width, "Grid width")->capture_default_str();
    g->add_option("--t", gen.syn.steps, "Time steps")->capture_default_str();
    g->add_option("--clusters", gen.syn.clusters, "Planted clusters")->capture_default_str();
    g->add_option("--noise", gen.syn.noise, "Observation noise std")->capture_default_str();
    g->add_option("--seed", gen.syn.seed, "Random seed")->capture_default_str();
    g->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Run the five-fold masked-station protocol");
    t->add_option("--config", tr.config, "Config file")->required();
    t->add_option("--dataset", tr.dataset, "Dataset directory (overrides the config)");
    t->add_option("--out", tr.out, "Output directory")->required();
    t->add_option("--variant", tr.variant, "Model variant, e.g. DSGNN or DSGNN-C");
    t->add_option("--jobs", tr.jobs, "Folds trained in parallel")->capture_default_str()->check(CLI::PositiveNumber);

    EstimateArgs es;
    auto* e = app.add_subcommand("estimate", "Estimate a pollutant map at one test time step");
    e->add_option("--params", es.params, "params.json of a trained fold")->required();
    e->add_option("--dataset", es.dataset, "Dataset directory");
    e->add_option("--time", es.time, "Time index (must lie in the test split)")->required();
    e->add_option("--out", es.out, "Output CSV; a .pgm heatmap is written next to it")->required();

    AblateArgs ab;
    auto* b = app.add_subcommand("ablate", "Run several variants and write a comparison table");
    b->add_option("--config", ab.config, "Config file")->required();
    b->add_option("--dataset", ab.dataset, "Dataset directory (overrides the config)");
    b->add_option("--variants", ab.variants, "Comma-separated variant names")->required();
    b->add_option("--out", ab.out, "Output directory")->required();
    b->add_option("--jobs", ab.jobs, "Folds trained in parallel")->capture_default_str()->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& pe) {
        const int code = app.exit(pe, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (g->parsed()) cmd_generate(gen, err);
        else if (t->parsed()) cmd_train(tr, err);
        else if (e->parsed()) cmd_estimate(es);
        else if (b->parsed()) cmd_ablate(ab, err);
        return kExitOk;
    } catch (const ConfigError& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitRuntime;
    }
}

} // namespace dsgnn::cli
