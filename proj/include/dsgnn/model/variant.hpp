#pragma once

// Ablation switches and the named model variants that set them.

#include <algorithm>
#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "dsgnn/errors.hpp"

namespace dsgnn {

enum class GraphMode {
    Weighted,      // learned sigmoid weights
    TopKBinary,    // top-k outgoing edges per supergrid set to 1
    TopKWeighted,  // top-k outgoing edges keep their learned weight
    AllOnes,       // every edge weight forced to 1
};

struct Ablation {
    bool cnn_only = false;        // C: no supergrid machinery in either view
    bool static_branch = true;    // off for DS
    bool dynamic_branch = true;   // off for SS
    bool aod_supergrids = true;   // off for M
    bool met_supergrids = true;   // off for A
    bool threshold = true;        // off for LR
    bool low_rank = true;         // off for S
    GraphMode graph = GraphMode::Weighted;
    std::size_t topk = 3;

    bool view_has_supergrids(bool aod_view) const {
        return !cnn_only && (aod_view ? aod_supergrids : met_supergrids);
    }
    std::size_t active_branches(bool aod_view) const {
        if (!view_has_supergrids(aod_view)) return 0;
        return static_cast<std::size_t>(static_branch) + static_cast<std::size_t>(dynamic_branch);
    }
    bool operator==(const Ablation&) const = default;
};

struct VariantInfo {
    std::string_view suffix;
    std::string_view meaning;
};

inline constexpr std::array<VariantInfo, 10> kVariantSuffixes = {{
    {"C", "convolution only, no supergrids"},
    {"DS", "without static supergrids"},
    {"SS", "without dynamic supergrids"},
    {"LR", "without the sparse threshold"},
    {"S", "dense assignment logits instead of the low-rank mapper"},
    {"A", "supergrids in the AOD view only"},
    {"M", "supergrids in the meteorology view only"},
    {"SG", "top-k edges per supergrid set to 1"},
    {"SWG", "top-k edges per supergrid keep their weights"},
    {"FCG", "all edge weights fixed to 1"},
}};

inline std::vector<std::string> variant_names() {
    std::vector<std::string> out{"DSGNN"};
    for (const auto& v : kVariantSuffixes) out.push_back("DSGNN-" + std::string(v.suffix));
    return out;
}

/// Parses "DSGNN", "DSGNN-C", "DSGNN-DS+LR", ... ("full" is accepted for DSGNN).
inline Ablation parse_variant(std::string_view name) {
    auto fail = [&](const std::string& why) {
        std::string valid;
        for (const auto& n : variant_names()) valid += (valid.empty() ? "" : ", ") + n;
        throw ConfigError("variant '" + std::string(name) + "': " + why + " (valid: " + valid +
                          "; suffixes may be joined with '+')");
    };
    Ablation a;
    std::string_view rest = name;
    if (rest == "DSGNN" || rest == "full") return a;
    if (rest.starts_with("DSGNN-")) rest.remove_prefix(6);
    if (rest.empty()) fail("empty variant");
    std::vector<std::string> parts;
    while (!rest.empty()) {
        const auto cut = rest.find('+');
        std::string part(rest.substr(0, cut));
        if (part.starts_with("DSGNN-")) part = part.substr(6);
        parts.push_back(part);
        if (cut == std::string_view::npos) break;
        rest.remove_prefix(cut + 1);
    }
    auto has = [&](const char* s) { return std::find(parts.begin(), parts.end(), s) != parts.end(); };
    int graph_modes = 0;
    for (const auto& p : parts) {
        if (p == "C") a.cnn_only = true;
        else if (p == "DS") a.static_branch = false;
        else if (p == "SS") a.dynamic_branch = false;
        else if (p == "LR") a.threshold = false;
        else if (p == "S") a.low_rank = false;
        else if (p == "A") a.met_supergrids = false;
        else if (p == "M") a.aod_supergrids = false;
        else if (p == "SG") { a.graph = GraphMode::TopKBinary; ++graph_modes; }
        else if (p == "SWG") { a.graph = GraphMode::TopKWeighted; ++graph_modes; }
        else if (p == "FCG") { a.graph = GraphMode::AllOnes; ++graph_modes; }
        else fail("unknown component '" + p + "'");
    }
    if (a.cnn_only && parts.size() > 1) fail("C removes all supergrids and cannot be combined");
    if (has("DS") && has("SS")) fail("DS and SS together leave no supergrid branch");
    if (has("A") && has("M")) fail("A and M together leave no supergrid view");
    if (has("LR") && has("S")) fail("LR and S together remove both assignment components");
    if (graph_modes > 1) fail("at most one of SG, SWG, FCG");
    return a;
}

} // namespace dsgnn
