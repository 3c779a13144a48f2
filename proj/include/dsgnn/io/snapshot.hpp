#pragma once

// JSON snapshot of a trained fold model: configuration, fold cells, output transform,
// static embeddings, batch-norm statistics and every parameter.

#include <filesystem>

#include "json.hpp"

#include "dsgnn/io/atomic_file.hpp"
#include "dsgnn/training/config.hpp"
#include "dsgnn/training/trainer.hpp"

namespace dsgnn {

using io::read_file;
using io::write_atomic;

namespace detail {

inline nlohmann::json array_json(const DenseArray& a) {
    return {{"shape", a.shape()}, {"values", std::vector<double>(a.data().begin(), a.data().end())}};
}

inline DenseArray array_from_json(const nlohmann::json& j) {
    DenseArray a(j.at("shape").get<Shape>());
    const auto values = j.at("values").get<std::vector<double>>();
    if (values.size() != a.size()) throw LoadError("snapshot: array value count does not match its shape");
    std::copy(values.begin(), values.end(), a.data().begin());
    return a;
}

} // namespace detail

struct Snapshot {
    TrainConfig config;
    StationFold fold;
    std::shared_ptr<DsgnnModel> model;
};

inline std::string snapshot_json(const DsgnnModel& model, const TrainConfig& cfg, const StationFold& fold) {
    nlohmann::json j;
    j["format"] = "dsgnn-params";
    j["version"] = 1;
    j["config"] = config_echo(cfg);
    j["height"] = model.config().height;
    j["width"] = model.config().width;
    j["model_seed"] = model.seed();
    j["fold"] = {{"id", fold.fold_id}, {"target_cells", fold.target_cells}, {"input_cells", fold.input_cells}};
    j["output"] = {{"offset", model.output_offset()}, {"scale", model.output_scale()}};
    for (View v : {View::Aod, View::Met}) {
        const std::string vp = view_prefix(v);
        j["static"][vp] = detail::array_json(model.static_semantics(v));
        j["batch_norm"][vp] = {{"mean", detail::array_json(model.bn(v).running_mean)},
                               {"var", detail::array_json(model.bn(v).running_var)}};
    }
    for (const auto& [name, e] : model.params()) j["params"][name] = detail::array_json(e.value);
    return j.dump(1);
}

inline void save_snapshot(const std::filesystem::path& path, const DsgnnModel& model, const TrainConfig& cfg,
                          const StationFold& fold) {
    write_atomic(path, snapshot_json(model, cfg, fold));
}

inline Snapshot load_snapshot(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw LoadError("params file not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("params file " + path.string() + " is not valid JSON: " + e.what());
    }
    try {
        if (j.at("format") != "dsgnn-params" || j.at("version") != 1) throw LoadError("unsupported params file format");
        Snapshot s;
        s.config = parse_config(j.at("config").get<std::string>(), path.string() + " (embedded config)");
        s.fold.fold_id = j.at("fold").at("id").get<std::size_t>();
        s.fold.target_cells = j.at("fold").at("target_cells").get<std::vector<std::size_t>>();
        s.fold.input_cells = j.at("fold").at("input_cells").get<std::vector<std::size_t>>();
        const auto h = j.at("height").get<std::size_t>(), w = j.at("width").get<std::size_t>();
        s.model = std::make_shared<DsgnnModel>(s.config.model_config(h, w), j.at("model_seed").get<std::uint64_t>());
        s.model->set_output_transform(j.at("output").at("offset").get<double>(), j.at("output").at("scale").get<double>());
        for (View v : {View::Aod, View::Met}) {
            const std::string vp = view_prefix(v);
            s.model->set_static_semantics(v, detail::array_from_json(j.at("static").at(vp)));
            s.model->bn(v).running_mean = detail::array_from_json(j.at("batch_norm").at(vp).at("mean"));
            s.model->bn(v).running_var = detail::array_from_json(j.at("batch_norm").at(vp).at("var"));
        }
        const auto& params = j.at("params");
        if (params.size() != s.model->params().size()) throw LoadError("snapshot: parameter count mismatch");
        for (auto& [name, e] : s.model->params()) {
            if (!params.contains(name)) throw LoadError("snapshot: missing parameter '" + name + "'");
            DenseArray a = detail::array_from_json(params.at(name));
            if (a.shape() != e.value.shape()) {
                throw LoadError("snapshot: parameter '" + name + "' has shape " + shape_string(a.shape()) + ", expected " +
                                shape_string(e.value.shape()));
            }
            e.value = std::move(a);
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("params file " + path.string() + ": " + e.what());
    }
}

} // namespace dsgnn
