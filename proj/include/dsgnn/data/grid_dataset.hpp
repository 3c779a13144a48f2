#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dsgnn/errors.hpp"

namespace dsgnn {

inline constexpr std::array<std::string_view, 1> kAodChannels = {"aod"};
inline constexpr std::array<std::string_view, 5> kMeteorologyChannels = {"temperature", "humidity", "rainfall",
                                                                         "wind_force", "wind_direction"};
inline constexpr std::array<std::string_view, 6> kAirQualityChannels = {"SO2", "NO2", "PM10", "CO", "O3", "PM2.5"};

inline constexpr std::size_t kAodChannelCount = kAodChannels.size();
inline constexpr std::size_t kMeteorologyChannelCount = kMeteorologyChannels.size();
inline constexpr std::size_t kAirQualityChannelCount = kAirQualityChannels.size();
inline constexpr std::size_t kPm25Channel = 5;

/// Index of an air-quality channel by name ("PM2.5") or numeric string ("5").
inline std::size_t air_quality_channel(std::string_view name) {
    for (std::size_t i = 0; i < kAirQualityChannels.size(); ++i)
        if (kAirQualityChannels[i] == name) return i;
    if (name.size() == 1 && name[0] >= '0' && name[0] < '0' + static_cast<char>(kAirQualityChannelCount)) {
        return static_cast<std::size_t>(name[0] - '0');
    }
    throw ConfigError("unknown air-quality channel '" + std::string(name) +
                      "' (expected one of SO2, NO2, PM10, CO, O3, PM2.5)");
}

/// Grid-region dataset: H x W regions observed over T time steps.
/// Arrays are stored as float32 in (t, i, j, c) row-major order.
struct GridDataset {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t steps = 0;
    std::vector<float> aod;          // T x H x W x 1
    std::vector<float> meteorology;  // T x H x W x 5
    std::vector<float> air_quality;  // T x H x W x 6, NaN allowed only off-station
    std::vector<std::uint8_t> station_mask;            // H x W
    std::optional<std::vector<std::int32_t>> planted_labels;  // H x W, synthetic sets only

    std::size_t cells() const noexcept { return height * width; }

    float aod_at(std::size_t t, std::size_t cell) const { return aod[t * cells() + cell]; }
    float met_at(std::size_t t, std::size_t cell, std::size_t c) const {
        return meteorology[(t * cells() + cell) * kMeteorologyChannelCount + c];
    }
    float aq_at(std::size_t t, std::size_t cell, std::size_t c) const {
        return air_quality[(t * cells() + cell) * kAirQualityChannelCount + c];
    }
    float& aq_ref(std::size_t t, std::size_t cell, std::size_t c) {
        return air_quality[(t * cells() + cell) * kAirQualityChannelCount + c];
    }

    std::vector<std::size_t> station_cells() const {
        std::vector<std::size_t> out;
        for (std::size_t c = 0; c < station_mask.size(); ++c)
            if (station_mask[c]) out.push_back(c);
        return out;
    }

    /// Checks sizes, channel counts, the station minimum and the NaN policy.
    void validate() const {
        if (height == 0 || width == 0 || steps == 0) throw LoadError("dataset: H, W and T must be positive");
        const std::size_t n = steps * cells();
        auto check = [](const char* field, std::size_t got, std::size_t want) {
            if (got != want) {
                throw LoadError(std::string("dataset field '") + field + "': expected " + std::to_string(want) +
                                " values, found " + std::to_string(got));
            }
        };
        check("aod", aod.size(), n * kAodChannelCount);
        check("meteorology", meteorology.size(), n * kMeteorologyChannelCount);
        check("air_quality", air_quality.size(), n * kAirQualityChannelCount);
        check("station_mask", station_mask.size(), cells());
        if (planted_labels) check("planted_labels", planted_labels->size(), cells());
        if (station_cells().size() < 10) {
            throw LoadError("dataset field 'station_mask': needs at least 10 station cells, found " +
                            std::to_string(station_cells().size()));
        }
        for (std::size_t i = 0; i < aod.size(); ++i)
            if (!std::isfinite(aod[i])) throw LoadError("dataset field 'aod': non-finite value at index " + std::to_string(i));
        for (std::size_t i = 0; i < meteorology.size(); ++i)
            if (!std::isfinite(meteorology[i])) {
                throw LoadError("dataset field 'meteorology': non-finite value at index " + std::to_string(i));
            }
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t cell = 0; cell < cells(); ++cell)
                for (std::size_t c = 0; c < kAirQualityChannelCount; ++c) {
                    const float v = aq_at(t, cell, c);
                    if (!std::isfinite(v) && station_mask[cell]) {
                        throw LoadError("dataset field 'air_quality': missing value at station cell " +
                                        std::to_string(cell) + ", t=" + std::to_string(t));
                    }
                }
    }
};

} // namespace dsgnn
