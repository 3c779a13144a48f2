#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dsgnn/data/grid_dataset.hpp"

namespace dsgnn {

/// Precomputed inverse-distance weights from every non-input cell to its nearest input cells.
struct IdwPlan {
    struct Source {
        std::size_t cell;
        double weight;  // normalized, sums to 1 per target
    };
    std::size_t cells = 0;
    std::vector<std::uint8_t> is_input;
    std::vector<std::vector<Source>> sources;  // empty for input cells
};

/// Neighbours are ranked by Euclidean distance on (row, col) indices; ties go to the lower
/// cell index. Weights are 1 / distance^power over the k nearest inputs.
inline IdwPlan make_idw_plan(std::size_t height, std::size_t width, const std::vector<std::size_t>& input_cells,
                             std::size_t k = 8, double power = 2.0) {
    if (input_cells.empty()) throw ProtocolError("idw fill: no input cells");
    IdwPlan plan;
    plan.cells = height * width;
    plan.is_input.assign(plan.cells, 0);
    for (auto c : input_cells) {
        if (c >= plan.cells) throw ProtocolError("idw fill: input cell " + std::to_string(c) + " outside the grid");
        plan.is_input[c] = 1;
    }
    std::vector<std::size_t> inputs;
    for (std::size_t c = 0; c < plan.cells; ++c)
        if (plan.is_input[c]) inputs.push_back(c);
    const std::size_t use = std::min(k, inputs.size());
    plan.sources.resize(plan.cells);

    std::vector<std::pair<double, std::size_t>> ranked(inputs.size());
    for (std::size_t cell = 0; cell < plan.cells; ++cell) {
        if (plan.is_input[cell]) continue;
        const double ci = static_cast<double>(cell / width), cj = static_cast<double>(cell % width);
        for (std::size_t n = 0; n < inputs.size(); ++n) {
            const double di = static_cast<double>(inputs[n] / width) - ci;
            const double dj = static_cast<double>(inputs[n] % width) - cj;
            ranked[n] = {di * di + dj * dj, inputs[n]};
        }
        std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(use), ranked.end());
        double total = 0.0;
        auto& src = plan.sources[cell];
        for (std::size_t n = 0; n < use; ++n) {
            const double w = 1.0 / std::pow(std::sqrt(ranked[n].first), power);
            src.push_back({ranked[n].second, w});
            total += w;
        }
        for (auto& s : src) s.weight /= total;
    }
    return plan;
}

/// Replaces the air-quality channels of every non-input cell by IDW interpolation
/// (power 2, 8 nearest input cells). Input cells keep their observed values.
inline GridDataset fill_missing_air_quality(const GridDataset& ds, const std::vector<std::size_t>& input_cells) {
    const IdwPlan plan = make_idw_plan(ds.height, ds.width, input_cells);
    GridDataset out = ds;
    for (std::size_t t = 0; t < ds.steps; ++t) {
        for (std::size_t cell = 0; cell < ds.cells(); ++cell) {
            if (plan.is_input[cell]) continue;
            for (std::size_t c = 0; c < kAirQualityChannelCount; ++c) {
                double v = 0.0;
                for (const auto& s : plan.sources[cell]) v += s.weight * static_cast<double>(ds.aq_at(t, s.cell, c));
                out.aq_ref(t, cell, c) = static_cast<float>(v);
            }
        }
    }
    return out;
}

} // namespace dsgnn
