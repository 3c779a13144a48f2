#pragma once

// Synthetic benchmark with planted supergrid structure.
//
// The grid is cut into K Voronoi regions. Each region has its own wind regime and
// emission signal; a pollutant field evolves by operator-split explicit Euler steps
// (upwind advection, 5-point diffusion, emission and rain-dependent decay). AOD and the
// air-quality channels are affine images of the pollutant field; meteorology follows the
// region regimes. Every sub-step is a convex or positive combination, so the field stays
// non-negative for diffusion in (0, 0.25] and advection within one cell per step.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dsgnn/data/grid_dataset.hpp"
#include "dsgnn/numerics/random.hpp"

namespace dsgnn {

struct SyntheticConfig {
    std::size_t height = 24;
    std::size_t width = 24;
    std::size_t steps = 400;
    std::size_t clusters = 4;
    double noise = 0.1;
    std::uint64_t seed = 0;
    std::size_t tau = 6;
    double station_fraction = 0.15;
    double diffusion = 0.2;
    double decay = 0.1;
    double wind_scale = 1.0;  // multiplies every regime's wind speed (cells per step)
    std::size_t burn_in = 48;
    std::vector<double> wind_directions;  // optional per-cluster base direction override, radians
};

struct SyntheticResult {
    GridDataset dataset;
    std::vector<double> pollutant;  // T x H x W, noise-free
    std::vector<std::string> warnings;
};

namespace detail {

struct Regime {
    double direction = 0.0, direction_amp = 0.0, direction_period = 1.0, direction_phase = 0.0;
    double speed = 0.0, speed_phase = 0.0;
    double emission = 0.0, emission_phase = 0.0;
    double temperature_offset = 0.0, humidity_offset = 0.0;
    double ar_state = 0.0, rain_state = 0.0;
};

inline std::vector<std::size_t> spread_seeds(std::size_t height, std::size_t width, std::size_t k, Rng& rng) {
    std::vector<std::size_t> seeds;
    const std::size_t cells = height * width;
    while (seeds.size() < k) {
        std::size_t best = cells;
        double best_d = -1.0;
        for (int cand = 0; cand < 16; ++cand) {
            const std::size_t c = rng.index(cells);
            if (std::find(seeds.begin(), seeds.end(), c) != seeds.end()) continue;
            double dmin = 1e300;
            for (auto s : seeds) {
                const double di = static_cast<double>(s / width) - static_cast<double>(c / width);
                const double dj = static_cast<double>(s % width) - static_cast<double>(c % width);
                dmin = std::min(dmin, di * di + dj * dj);
            }
            if (dmin > best_d) {
                best_d = dmin;
                best = c;
            }
        }
        if (best < cells) seeds.push_back(best);
    }
    return seeds;
}

} // namespace detail

inline SyntheticResult simulate_synthetic(const SyntheticConfig& cfg) {
    const std::size_t h = cfg.height, w = cfg.width, cells = h * w;
    if (h == 0 || w == 0) throw ConfigError("synthetic: grid must be non-empty");
    if (cfg.clusters < 1 || cfg.clusters > cells) {
        throw ConfigError("synthetic: need 1 <= clusters <= H*W, got " + std::to_string(cfg.clusters));
    }
    if (cfg.tau < 1 || cfg.steps < 2 * cfg.tau) {
        throw ConfigError("synthetic: need T >= 2*tau (T=" + std::to_string(cfg.steps) + ", tau=" +
                          std::to_string(cfg.tau) + ")");
    }
    if (!(cfg.diffusion > 0.0 && cfg.diffusion <= 0.25)) throw ConfigError("synthetic: diffusion must lie in (0, 0.25]");
    if (!(cfg.decay > 0.0 && cfg.decay < 0.5)) throw ConfigError("synthetic: decay must lie in (0, 0.5)");
    if (cfg.noise < 0.0) throw ConfigError("synthetic: noise must be >= 0");
    if (cells < 10) throw ConfigError("synthetic: grid needs at least 10 cells for station folds");
    if (!cfg.wind_directions.empty() && cfg.wind_directions.size() != cfg.clusters) {
        throw ConfigError("synthetic: wind_directions must list one angle per cluster");
    }

    Rng rng(cfg.seed);
    SyntheticResult res;
    GridDataset& ds = res.dataset;
    ds.height = h;
    ds.width = w;
    ds.steps = cfg.steps;

    // Voronoi partition around well-spread seeds.
    const auto seeds = detail::spread_seeds(h, w, cfg.clusters, rng);
    std::vector<std::int32_t> labels(cells, 0);
    for (std::size_t c = 0; c < cells; ++c) {
        double best = 1e300;
        for (std::size_t k = 0; k < seeds.size(); ++k) {
            const double di = static_cast<double>(seeds[k] / w) - static_cast<double>(c / w);
            const double dj = static_cast<double>(seeds[k] % w) - static_cast<double>(c % w);
            const double d = di * di + dj * dj;
            if (d < best) {
                best = d;
                labels[c] = static_cast<std::int32_t>(k);
            }
        }
    }

    std::vector<detail::Regime> regimes(cfg.clusters);
    for (std::size_t k = 0; k < cfg.clusters; ++k) {
        auto& r = regimes[k];
        r.direction = cfg.wind_directions.empty() ? rng.uniform(0.0, 2.0 * std::numbers::pi) : cfg.wind_directions[k];
        r.direction_amp = rng.uniform(0.2, 0.6);
        r.direction_period = rng.uniform(48.0, 120.0);
        r.direction_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        r.speed = rng.uniform(0.15, 0.5);
        r.speed_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        r.emission = rng.uniform(0.5, 2.0);
        r.emission_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        r.temperature_offset = rng.uniform(-4.0, 4.0);
        r.humidity_offset = rng.uniform(-10.0, 10.0);
    }

    // Station cells: uniform sample without replacement.
    {
        const auto want = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(cfg.station_fraction * static_cast<double>(cells))), 10, cells);
        std::vector<std::size_t> order(cells);
        for (std::size_t c = 0; c < cells; ++c) order[c] = c;
        rng.shuffle(order);
        ds.station_mask.assign(cells, 0);
        for (std::size_t i = 0; i < want; ++i) ds.station_mask[order[i]] = 1;
    }

    const std::size_t total = cfg.burn_in + cfg.steps;
    std::vector<double> field(cells), next(cells);
    for (std::size_t c = 0; c < cells; ++c) field[c] = regimes[static_cast<std::size_t>(labels[c])].emission / cfg.decay;

    ds.aod.resize(cfg.steps * cells);
    ds.meteorology.resize(cfg.steps * cells * kMeteorologyChannelCount);
    ds.air_quality.resize(cfg.steps * cells * kAirQualityChannelCount);
    res.pollutant.resize(cfg.steps * cells);

    // (intercept, slope) per air-quality channel: SO2, NO2, PM10, CO, O3, PM2.5
    constexpr double aq_coef[kAirQualityChannelCount][2] = {{4.0, 0.3}, {8.0, 0.9}, {15.0, 2.2},
                                                            {0.4, 0.03}, {70.0, -0.6}, {3.0, 1.6}};
    const double nan = std::nan("");
    std::vector<char> warned(cfg.clusters, 0);
    std::vector<double> ux(cfg.clusters), uy(cfg.clusters), emis(cfg.clusters), rain(cfg.clusters),
        speed(cfg.clusters), dir(cfg.clusters);

    for (std::size_t step = 0; step < total; ++step) {
        const double tt = static_cast<double>(step);
        for (std::size_t k = 0; k < cfg.clusters; ++k) {
            auto& r = regimes[k];
            dir[k] = r.direction + r.direction_amp * std::sin(2.0 * std::numbers::pi * tt / r.direction_period + r.direction_phase);
            speed[k] = cfg.wind_scale * r.speed * (1.0 + 0.3 * std::sin(2.0 * std::numbers::pi * tt / 24.0 + r.speed_phase));
            ux[k] = speed[k] * std::cos(dir[k]);
            uy[k] = speed[k] * std::sin(dir[k]);
            const double cfl = std::abs(ux[k]) + std::abs(uy[k]);
            if (cfl > 1.0) {
                ux[k] /= cfl;
                uy[k] /= cfl;
                if (!warned[k]) {
                    warned[k] = 1;
                    res.warnings.push_back("cluster " + std::to_string(k) + ": wind step of " + std::to_string(cfl) +
                                           " cells clamped to 1 (first at t=" + std::to_string(step) + ")");
                }
            }
            r.ar_state = 0.97 * r.ar_state + 0.12 * rng.normal();
            r.rain_state = 0.9 * r.rain_state + 0.5 * rng.normal();
            rain[k] = std::max(0.0, r.rain_state - 0.8);
            emis[k] = r.emission * (1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * tt / 24.0 + r.emission_phase)) *
                      std::exp(r.ar_state);
        }

        // Upwind advection (x along columns, y along rows), zero-gradient boundaries.
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t c = i * w + j;
                const auto k = static_cast<std::size_t>(labels[c]);
                const double ax = std::abs(ux[k]), ay = std::abs(uy[k]);
                const std::size_t jx = ux[k] > 0 ? (j > 0 ? j - 1 : j) : (j + 1 < w ? j + 1 : j);
                const std::size_t iy = uy[k] > 0 ? (i > 0 ? i - 1 : i) : (i + 1 < h ? i + 1 : i);
                next[c] = (1.0 - ax - ay) * field[c] + ax * field[i * w + jx] + ay * field[iy * w + j];
            }
        }
        field.swap(next);
        // Diffusion.
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t c = i * w + j;
                double lap = 0.0;
                if (i > 0) lap += field[c - w] - field[c];
                if (i + 1 < h) lap += field[c + w] - field[c];
                if (j > 0) lap += field[c - 1] - field[c];
                if (j + 1 < w) lap += field[c + 1] - field[c];
                next[c] = field[c] + cfg.diffusion * lap;
            }
        }
        field.swap(next);
        // Emission and rain-enhanced decay.
        for (std::size_t c = 0; c < cells; ++c) {
            const auto k = static_cast<std::size_t>(labels[c]);
            const double loss = std::min(0.5, cfg.decay + 0.05 * rain[k]);
            field[c] = field[c] * (1.0 - loss) + emis[k];
        }

        if (step < cfg.burn_in) continue;
        const std::size_t t = step - cfg.burn_in;
        for (std::size_t c = 0; c < cells; ++c) {
            const auto k = static_cast<std::size_t>(labels[c]);
            const double p = field[c];
            res.pollutant[t * cells + c] = p;
            ds.aod[t * cells + c] = static_cast<float>(0.2 + 0.04 * p + cfg.noise * rng.normal());

            const double diurnal = std::sin(2.0 * std::numbers::pi * tt / 24.0);
            float* met = &ds.meteorology[(t * cells + c) * kMeteorologyChannelCount];
            met[0] = static_cast<float>(15.0 + 8.0 * diurnal + regimes[k].temperature_offset + 2.0 * cfg.noise * rng.normal());
            met[1] = static_cast<float>(std::clamp(60.0 - 10.0 * diurnal + regimes[k].humidity_offset + 10.0 * rain[k] +
                                                       5.0 * cfg.noise * rng.normal(),
                                                   0.0, 100.0));
            met[2] = static_cast<float>(std::max(0.0, rain[k] + 0.5 * cfg.noise * rng.normal()));
            met[3] = static_cast<float>(std::max(0.0, 10.0 * speed[k] + cfg.noise * rng.normal()));
            double deg = std::fmod(dir[k] * 180.0 / std::numbers::pi + 5.0 * cfg.noise * rng.normal(), 360.0);
            if (deg < 0) deg += 360.0;
            met[4] = static_cast<float>(deg);

            float* aq = &ds.air_quality[(t * cells + c) * kAirQualityChannelCount];
            for (std::size_t ch = 0; ch < kAirQualityChannelCount; ++ch) {
                aq[ch] = ds.station_mask[c] ? static_cast<float>(aq_coef[ch][0] + aq_coef[ch][1] * p)
                                            : static_cast<float>(nan);
            }
        }
    }
    ds.planted_labels = std::move(labels);
    ds.validate();
    return res;
}

/// Convenience wrapper returning only the dataset; warnings are appended when requested.
inline GridDataset gen_synthetic(const SyntheticConfig& cfg, std::vector<std::string>* warnings = nullptr) {
    auto res = simulate_synthetic(cfg);
    if (warnings) warnings->insert(warnings->end(), res.warnings.begin(), res.warnings.end());
    return std::move(res.dataset);
}

} // namespace dsgnn
