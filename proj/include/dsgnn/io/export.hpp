#pragma once

// Plain-text exports: ASCII PGM heatmaps, label maps, CSV grids.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "dsgnn/errors.hpp"
#include "dsgnn/io/atomic_file.hpp"
#include "dsgnn/numerics/dense_array.hpp"

namespace dsgnn {

using io::read_file;
using io::write_atomic;

/// ASCII P2 image of an H x W grid, linearly mapped so min -> 0 and max -> maxval.
/// A constant grid maps to mid-grey.
inline std::string pgm_text(const std::vector<double>& values, std::size_t height, std::size_t width, int maxval = 255) {
    if (values.size() != height * width) throw DimensionError("pgm: value count does not match the grid");
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = values.empty() ? 0.0 : *lo_it, hi = values.empty() ? 0.0 : *hi_it;
    std::ostringstream o;
    o << "P2\n" << width << ' ' << height << '\n' << maxval << '\n';
    for (std::size_t i = 0; i < height; ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            const double v = values[i * width + j];
            const int level = hi > lo ? static_cast<int>(std::lround((v - lo) / (hi - lo) * maxval)) : maxval / 2;
            o << (j ? " " : "") << level;
        }
        o << '\n';
    }
    return o.str();
}

inline std::string label_pgm_text(const std::vector<int>& labels, std::size_t height, std::size_t width) {
    std::vector<double> v(labels.begin(), labels.end());
    return pgm_text(v, height, width);
}

/// H lines of W space-separated labels.
inline std::string label_text(const std::vector<int>& labels, std::size_t height, std::size_t width) {
    if (labels.size() != height * width) throw DimensionError("label map: label count does not match the grid");
    std::ostringstream o;
    for (std::size_t i = 0; i < height; ++i) {
        for (std::size_t j = 0; j < width; ++j) o << (j ? " " : "") << labels[i * width + j];
        o << '\n';
    }
    return o.str();
}

/// Row-major rows x cols CSV without a header.
inline std::string grid_csv(const std::vector<double>& values, std::size_t rows, std::size_t cols) {
    if (values.size() != rows * cols) throw DimensionError("csv: value count does not match the shape");
    std::ostringstream o;
    char buf[40];
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            std::snprintf(buf, sizeof buf, "%.10g", values[i * cols + j]);
            o << (j ? "," : "") << buf;
        }
        o << '\n';
    }
    return o.str();
}

inline std::string matrix_csv(const DenseArray& m) {
    if (m.rank() != 2) throw DimensionError("matrix_csv: expected a matrix, got " + shape_string(m.shape()));
    return grid_csv(std::vector<double>(m.data().begin(), m.data().end()), m.shape()[0], m.shape()[1]);
}

} // namespace dsgnn
