#pragma once

#include <map>
#include <utility>
#include <vector>

#include "dsgnn/errors.hpp"

namespace dsgnn {

/// Adjusted Rand index between two labelings of the same items. Two single-cluster
/// labelings score 1.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw DimensionError("adjusted_rand_index: labelings differ in length");
    if (a.empty()) throw ContractError("adjusted_rand_index: empty labeling");
    auto pairs = [](double n) { return n * (n - 1.0) / 2.0; };
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ra, rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0;
        ra[a[i]] += 1.0;
        rb[b[i]] += 1.0;
    }
    double index = 0.0, sa = 0.0, sb = 0.0;
    for (const auto& [k, n] : joint) index += pairs(n);
    for (const auto& [k, n] : ra) sa += pairs(n);
    for (const auto& [k, n] : rb) sb += pairs(n);
    const double expected = sa * sb / pairs(static_cast<double>(a.size()));
    const double max_index = 0.5 * (sa + sb);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

} // namespace dsgnn
