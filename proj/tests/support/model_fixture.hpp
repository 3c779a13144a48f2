#pragma once

// Small randomized models and inputs for model-level tests.

#include <string>

#include "dsgnn/model/dsgnn_model.hpp"
#include "support/gradcheck.hpp"

namespace dsgnn::testing {

inline ModelConfig small_config(const std::string& variant = "DSGNN", std::size_t h = 6, std::size_t w = 6,
                                std::size_t d = 4, std::size_t tau = 2, std::size_t n_dyn = 2, std::size_t n_sta = 2) {
    ModelConfig m;
    m.height = h;
    m.width = w;
    m.d = d;
    m.tau = tau;
    m.n_dyn = n_dyn;
    m.n_sta = n_sta;
    m.ablation = parse_variant(variant);
    return m;
}

inline SampleInputs random_inputs(const ModelConfig& m, Rng& rng) {
    SampleInputs in;
    for (View v : {View::Aod, View::Met}) {
        in.init_seq[static_cast<int>(v)] = random_array(Shape{m.cells(), m.tau, init_channels(v)}, rng);
        in.dyn_seq[static_cast<int>(v)] = random_array(Shape{m.cells(), m.tau, dynamic_channels(v)}, rng);
    }
    return in;
}

/// Every parameter drawn uniformly from [-scale, scale]; static embeddings random too.
inline void randomize(DsgnnModel& model, Rng& rng, double scale = 0.5) {
    for (auto& [name, e] : model.params())
        for (auto& v : e.value.data()) v = rng.uniform(-scale, scale);
    for (View v : {View::Aod, View::Met})
        model.set_static_semantics(v, random_array(Shape{model.config().cells(), model.config().d}, rng));
}

inline std::vector<double> random_truth(std::size_t cells, Rng& rng) {
    std::vector<double> t(cells);
    for (auto& v : t) v = rng.uniform(-2.0, 2.0);
    return t;
}

} // namespace dsgnn::testing
