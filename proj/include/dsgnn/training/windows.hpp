#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dsgnn/errors.hpp"

namespace dsgnn {

/// Chronological split of time steps: [0, train_end) train, [train_end, val_end)
/// validation, [val_end, T) test. A window belongs to the split of its last step.
struct TimeSplit {
    std::size_t steps = 0;
    std::size_t tau = 1;
    std::size_t train_end = 0;
    std::size_t val_end = 0;
    std::vector<std::size_t> train, val, test;  // window end indices (0-based)
};

inline TimeSplit make_windows(std::size_t steps, std::size_t tau, double train_frac = 0.7, double val_frac = 0.1) {
    if (tau == 0) throw ConfigError("tau must be >= 1");
    if (steps < tau) {
        throw ConfigError("time series of " + std::to_string(steps) + " steps is shorter than tau=" + std::to_string(tau));
    }
    TimeSplit s;
    s.steps = steps;
    s.tau = tau;
    // The small slack keeps 0.7 + 0.1 of 10 steps at 8 rather than 7.99...
    auto cut = [&](double frac) { return static_cast<std::size_t>(std::floor(static_cast<double>(steps) * frac + 1e-9)); };
    s.train_end = cut(train_frac);
    s.val_end = cut(train_frac + val_frac);
    for (std::size_t t = tau - 1; t < steps; ++t) {
        if (t < s.train_end) s.train.push_back(t);
        else if (t < s.val_end) s.val.push_back(t);
        else s.test.push_back(t);
    }
    return s;
}

} // namespace dsgnn
