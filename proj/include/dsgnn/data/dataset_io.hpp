#pragma once

// On-disk dataset layout: a JSON manifest plus one raw little-endian file per variable.
//
//   manifest.json            format/version/H/W/T, channel names, file list, endianness
//   aod.f32                  float32 [T][H][W][1]
//   meteorology.f32          float32 [T][H][W][5]
//   air_quality.f32          float32 [T][H][W][6]  (NaN = no observation)
//   station_mask.u8          uint8   [H][W]
//   planted_labels.i32       int32   [H][W]        (optional)

#include <bit>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsgnn/data/grid_dataset.hpp"
#include "dsgnn/io/atomic_file.hpp"

namespace dsgnn {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

namespace detail {

template <class T>
std::string to_le_bytes(const std::vector<T>& values) {
    std::string out(values.size() * sizeof(T), '\0');
    std::memcpy(out.data(), values.data(), out.size());
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            char* p = out.data() + i * sizeof(T);
            for (std::size_t a = 0, b = sizeof(T) - 1; a < b; ++a, --b) std::swap(p[a], p[b]);
        }
    }
    return out;
}

template <class T>
std::vector<T> from_le_bytes(const std::string& bytes, std::size_t count, const std::string& field) {
    if (bytes.size() != count * sizeof(T)) {
        throw LoadError("dataset field '" + field + "': expected " + std::to_string(count * sizeof(T)) +
                        " bytes, file has " + std::to_string(bytes.size()));
    }
    std::vector<T> out(count);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        for (auto& v : out) {
            auto* p = reinterpret_cast<char*>(&v);
            for (std::size_t a = 0, b = sizeof(T) - 1; a < b; ++a, --b) std::swap(p[a], p[b]);
        }
    }
    return out;
}

template <std::size_t N>
nlohmann::json names_json(const std::array<std::string_view, N>& names) {
    nlohmann::json arr = nlohmann::json::array();
    for (auto n : names) arr.push_back(std::string(n));
    return arr;
}

} // namespace detail

inline nlohmann::json make_manifest(const GridDataset& ds) {
    nlohmann::json m;
    m["format"] = "dsgnn-grid";
    m["version"] = kDatasetFormatVersion;
    m["height"] = ds.height;
    m["width"] = ds.width;
    m["steps"] = ds.steps;
    m["endianness"] = "little";
    m["layout"] = "t,i,j,c";
    m["channels"] = {{"aod", detail::names_json(kAodChannels)},
                     {"meteorology", detail::names_json(kMeteorologyChannels)},
                     {"air_quality", detail::names_json(kAirQualityChannels)}};
    nlohmann::json files = {{"aod", "aod.f32"},
                            {"meteorology", "meteorology.f32"},
                            {"air_quality", "air_quality.f32"},
                            {"station_mask", "station_mask.u8"}};
    if (ds.planted_labels) files["planted_labels"] = "planted_labels.i32";
    m["files"] = files;
    return m;
}

/// Writes the dataset into `dir` (created if needed). Every file is written atomically.
inline void save_dataset(const GridDataset& ds, const std::filesystem::path& dir) {
    ds.validate();
    std::filesystem::create_directories(dir);
    io::write_atomic(dir / "aod.f32", detail::to_le_bytes(ds.aod));
    io::write_atomic(dir / "meteorology.f32", detail::to_le_bytes(ds.meteorology));
    io::write_atomic(dir / "air_quality.f32", detail::to_le_bytes(ds.air_quality));
    io::write_atomic(dir / "station_mask.u8", detail::to_le_bytes(ds.station_mask));
    if (ds.planted_labels) io::write_atomic(dir / "planted_labels.i32", detail::to_le_bytes(*ds.planted_labels));
    io::write_atomic(dir / kManifestName, make_manifest(ds).dump(2) + "\n");
}

/// Loads and validates a dataset from a directory or a manifest path.
inline GridDataset load_dataset(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = fs::is_directory(path) ? path / kManifestName : path;
    const fs::path dir = manifest_path.parent_path();
    if (!fs::exists(manifest_path)) throw LoadError("manifest not found: " + manifest_path.string());

    nlohmann::json m;
    try {
        m = nlohmann::json::parse(io::read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("manifest " + manifest_path.string() + ": " + e.what());
    }
    auto field = [&](const char* key) -> const nlohmann::json& {
        if (!m.contains(key)) throw LoadError(std::string("manifest field '") + key + "' missing");
        return m.at(key);
    };
    try {
        if (field("version").get<int>() != kDatasetFormatVersion) {
            throw LoadError("manifest field 'version': unsupported version " + field("version").dump());
        }
        if (field("endianness").get<std::string>() != "little") {
            throw LoadError("manifest field 'endianness': only 'little' is supported");
        }
        GridDataset ds;
        ds.height = field("height").get<std::size_t>();
        ds.width = field("width").get<std::size_t>();
        ds.steps = field("steps").get<std::size_t>();
        if (ds.height == 0 || ds.width == 0 || ds.steps == 0) throw LoadError("manifest: H, W and T must be positive");

        const auto& ch = field("channels");
        auto check_channels = [&](const char* key, std::size_t want) {
            if (!ch.contains(key) || ch.at(key).size() != want) {
                throw LoadError(std::string("manifest field 'channels.") + key + "': expected " +
                                std::to_string(want) + " channels");
            }
        };
        check_channels("aod", kAodChannelCount);
        check_channels("meteorology", kMeteorologyChannelCount);
        check_channels("air_quality", kAirQualityChannelCount);

        const auto& files = field("files");
        auto read = [&](const char* key) {
            if (!files.contains(key)) throw LoadError(std::string("manifest field 'files.") + key + "' missing");
            return io::read_file(dir / files.at(key).get<std::string>());
        };
        const std::size_t n = ds.steps * ds.cells();
        ds.aod = detail::from_le_bytes<float>(read("aod"), n * kAodChannelCount, "aod");
        ds.meteorology = detail::from_le_bytes<float>(read("meteorology"), n * kMeteorologyChannelCount, "meteorology");
        ds.air_quality = detail::from_le_bytes<float>(read("air_quality"), n * kAirQualityChannelCount, "air_quality");
        ds.station_mask = detail::from_le_bytes<std::uint8_t>(read("station_mask"), ds.cells(), "station_mask");
        if (files.contains("planted_labels")) {
            ds.planted_labels = detail::from_le_bytes<std::int32_t>(read("planted_labels"), ds.cells(), "planted_labels");
        }
        ds.validate();
        return ds;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("manifest " + manifest_path.string() + ": " + e.what());
    }
}

} // namespace dsgnn
