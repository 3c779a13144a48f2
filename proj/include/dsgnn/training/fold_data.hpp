#pragma once

// Turns a dataset and a station fold into normalized model inputs. Air quality at every
// non-input cell is replaced by interpolation from the input cells before anything else
// happens, so held-out station values never reach the model.

#include <array>
#include <cmath>
#include <vector>

#include "dsgnn/data/folds.hpp"
#include "dsgnn/data/idw_fill.hpp"
#include "dsgnn/model/dsgnn_model.hpp"
#include "dsgnn/training/windows.hpp"

namespace dsgnn {

struct ChannelStats {
    std::vector<double> mean, stddev;
};

/// Per-channel mean and standard deviation over time steps [0, t_end) and all cells.
/// A zero deviation is reported as such; `normalize` then leaves the channel centred.
inline ChannelStats channel_stats(const std::vector<float>& data, std::size_t cells, std::size_t channels,
                                  std::size_t t_end) {
    ChannelStats s{std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0)};
    const double n = static_cast<double>(t_end * cells);
    for (std::size_t i = 0; i < t_end * cells; ++i)
        for (std::size_t c = 0; c < channels; ++c) s.mean[c] += data[i * channels + c];
    for (auto& m : s.mean) m /= n;
    for (std::size_t i = 0; i < t_end * cells; ++i)
        for (std::size_t c = 0; c < channels; ++c) {
            const double d = data[i * channels + c] - s.mean[c];
            s.stddev[c] += d * d;
        }
    for (auto& v : s.stddev) v = std::sqrt(v / n);
    return s;
}

inline std::vector<double> normalize(const std::vector<float>& data, const ChannelStats& s) {
    const std::size_t ch = s.mean.size();
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::size_t c = i % ch;
        const double sd = s.stddev[c] > 1e-12 ? s.stddev[c] : 1.0;
        out[i] = (data[i] - s.mean[c]) / sd;
    }
    return out;
}

/// View-level inputs independent of the fold (AOD and meteorology only).
struct SharedInputs {
    std::size_t height = 0, width = 0, steps = 0;
    TimeSplit split;
    ChannelStats aod_stats, met_stats;
    std::vector<double> aod, met;  // normalized, [T][cells][c]

    std::size_t cells() const { return height * width; }

    /// Training-split matrices for the static factorization: AOD [cells, T_train] and
    /// meteorology [cells, 5 * T_train] with channels unrolled along time.
    DenseArray static_matrix(View v) const {
        const std::size_t tt = split.train_end;
        const std::size_t ch = v == View::Aod ? kAodChannelCount : kMeteorologyChannelCount;
        const auto& src = v == View::Aod ? aod : met;
        DenseArray m(Shape{cells(), ch * tt});
        for (std::size_t cell = 0; cell < cells(); ++cell)
            for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t t = 0; t < tt; ++t) m(cell, c * tt + t) = src[(t * cells() + cell) * ch + c];
        return m;
    }
};

inline SharedInputs make_shared_inputs(const GridDataset& ds, std::size_t tau) {
    SharedInputs s;
    s.height = ds.height;
    s.width = ds.width;
    s.steps = ds.steps;
    s.split = make_windows(ds.steps, tau);
    if (s.split.train.empty() || s.split.val.empty() || s.split.test.empty()) {
        throw ConfigError("time series of " + std::to_string(ds.steps) + " steps leaves an empty split for tau=" +
                          std::to_string(tau));
    }
    s.aod_stats = channel_stats(ds.aod, ds.cells(), kAodChannelCount, s.split.train_end);
    s.met_stats = channel_stats(ds.meteorology, ds.cells(), kMeteorologyChannelCount, s.split.train_end);
    s.aod = normalize(ds.aod, s.aod_stats);
    s.met = normalize(ds.meteorology, s.met_stats);
    return s;
}

/// Everything the trainer needs for one fold.
struct FoldInputs {
    const SharedInputs* shared = nullptr;
    StationFold fold;
    std::size_t target_channel = kPm25Channel;
    ChannelStats aq_stats;
    std::vector<double> aq;                   // normalized filled air quality, [T][cells][6]
    std::vector<std::vector<double>> truth;   // raw target-channel value per step and target cell

    std::size_t cells() const { return shared->cells(); }

    double output_offset() const { return aq_stats.mean[target_channel]; }
    double output_scale() const { return aq_stats.stddev[target_channel]; }

    SampleInputs sample(std::size_t t_end, std::size_t tau) const {
        if (t_end + 1 < tau || t_end >= shared->steps) throw ProtocolError("window end " + std::to_string(t_end) + " out of range");
        const std::size_t cells = this->cells(), t0 = t_end + 1 - tau;
        SampleInputs in;
        for (View v : {View::Aod, View::Met}) {
            const std::size_t own = dynamic_channels(v);
            const auto& src = v == View::Aod ? shared->aod : shared->met;
            DenseArray init(Shape{cells, tau, own + kAirQualityChannelCount});
            DenseArray dyn(Shape{cells, tau, own});
            for (std::size_t cell = 0; cell < cells; ++cell)
                for (std::size_t k = 0; k < tau; ++k) {
                    const std::size_t t = t0 + k;
                    double* pi = &init[(cell * tau + k) * (own + kAirQualityChannelCount)];
                    double* pd = &dyn[(cell * tau + k) * own];
                    for (std::size_t c = 0; c < own; ++c) pi[c] = pd[c] = src[(t * cells + cell) * own + c];
                    for (std::size_t c = 0; c < kAirQualityChannelCount; ++c)
                        pi[own + c] = aq[(t * cells + cell) * kAirQualityChannelCount + c];
                }
            in.init_seq[static_cast<int>(v)] = std::move(init);
            in.dyn_seq[static_cast<int>(v)] = std::move(dyn);
        }
        return in;
    }
};

inline FoldInputs make_fold_inputs(const GridDataset& ds, const SharedInputs& shared, const StationFold& fold,
                                   std::size_t target_channel) {
    if (target_channel >= kAirQualityChannelCount) throw ConfigError("target channel out of range");
    if (fold.input_cells.empty() || fold.target_cells.empty()) throw ProtocolError("fold needs input and target cells");
    FoldInputs f;
    f.shared = &shared;
    f.fold = fold;
    f.target_channel = target_channel;
    const GridDataset filled = fill_missing_air_quality(ds, fold.input_cells);
    f.aq_stats = channel_stats(filled.air_quality, ds.cells(), kAirQualityChannelCount, shared.split.train_end);
    f.aq = normalize(filled.air_quality, f.aq_stats);
    f.truth.resize(ds.steps);
    for (std::size_t t = 0; t < ds.steps; ++t)
        for (auto cell : fold.target_cells) f.truth[t].push_back(ds.aq_at(t, cell, target_channel));
    return f;
}

} // namespace dsgnn
