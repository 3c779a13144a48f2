#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

#include "dsgnn/data/grid_dataset.hpp"
#include "dsgnn/numerics/random.hpp"

namespace dsgnn {

inline constexpr std::size_t kFoldCount = 5;

/// One masked-station split: target cells are hidden from the model and scored.
struct StationFold {
    std::size_t fold_id = 0;
    std::vector<std::size_t> target_cells;  // sorted
    std::vector<std::size_t> input_cells;   // sorted
};

/// Shuffles station cells with `seed` and cuts them into five parts whose sizes differ
/// by at most one (the first n % 5 parts get the extra cell).
inline std::array<StationFold, kFoldCount> make_folds(const std::vector<std::size_t>& station_cells,
                                                      std::uint64_t seed) {
    if (station_cells.size() < 2 * kFoldCount) {
        throw ProtocolError("make_folds: need at least " + std::to_string(2 * kFoldCount) + " station cells, have " +
                            std::to_string(station_cells.size()));
    }
    std::vector<std::size_t> order = station_cells;
    std::sort(order.begin(), order.end());
    Rng rng(seed);
    rng.shuffle(order);

    std::array<StationFold, kFoldCount> folds;
    const std::size_t base = order.size() / kFoldCount, extra = order.size() % kFoldCount;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < kFoldCount; ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        folds[f].fold_id = f;
        folds[f].target_cells.assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                     order.begin() + static_cast<std::ptrdiff_t>(pos + len));
        std::sort(folds[f].target_cells.begin(), folds[f].target_cells.end());
        pos += len;
    }
    for (auto& f : folds) {
        for (auto c : station_cells)
            if (!std::binary_search(f.target_cells.begin(), f.target_cells.end(), c)) f.input_cells.push_back(c);
        std::sort(f.input_cells.begin(), f.input_cells.end());
    }
    return folds;
}

inline std::array<StationFold, kFoldCount> make_folds(const GridDataset& ds, std::uint64_t seed) {
    return make_folds(ds.station_cells(), seed);
}

} // namespace dsgnn
